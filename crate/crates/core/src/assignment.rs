//! Exact linear assignment where every row may either take one column or
//! opt out ("miss") at a per-row price.
//!
//! `solve_lap` runs the shortest-augmenting-path Hungarian method on the
//! `N × (M + N)` matrix obtained by giving each row its own private miss
//! column. `brute_force_lap` enumerates every injection and serves as the
//! test oracle.

use crate::error::{Error, Result};

/// Largest row count accepted by [`brute_force_lap`].
pub const BRUTE_FORCE_MAX_ROWS: usize = 8;

/// Non-negative finite `N × M` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "cost matrix has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("cost entries must be finite and >= 0, got {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copy with columns reordered so that new column `k` is old column `perm[k]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            for &c in perm {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Result of an assignment: `rows[i]` is `Some(column)` or `None` for a miss.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub rows: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Assignment {
    /// Builds an assignment and its cost, summed in row order.
    pub fn evaluate(c: &CostMatrix, miss_costs: &[f64], rows: Vec<Option<usize>>) -> Self {
        let total_cost = total_cost(c, miss_costs, &rows);
        Self { rows, total_cost }
    }

    pub fn is_one_to_one(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.rows.iter().flatten().all(|c| seen.insert(*c))
    }

    /// Columns not taken by any row, for a matrix with `cols` columns.
    pub fn unassigned_cols(&self, cols: usize) -> Vec<usize> {
        let mut used = vec![false; cols];
        for c in self.rows.iter().flatten() {
            used[*c] = true;
        }
        (0..cols).filter(|c| !used[*c]).collect()
    }
}

fn total_cost(c: &CostMatrix, miss_costs: &[f64], rows: &[Option<usize>]) -> f64 {
    rows.iter()
        .enumerate()
        .map(|(i, a)| match a {
            Some(j) => c.get(i, *j),
            None => miss_costs[i],
        })
        .sum()
}

fn check_miss_costs(c: &CostMatrix, miss_costs: &[f64]) -> Result<()> {
    if miss_costs.len() != c.rows() {
        return Err(Error::invalid(format!(
            "{} miss costs for {} rows",
            miss_costs.len(),
            c.rows()
        )));
    }
    if miss_costs.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::invalid("miss costs must be finite and >= 0"));
    }
    Ok(())
}

/// Minimum-cost one-to-one assignment with a shared miss price.
pub fn solve_lap(c: &CostMatrix, miss_cost: f64) -> Result<Assignment> {
    solve_lap_with_misses(c, &vec![miss_cost; c.rows()])
}

/// Minimum-cost one-to-one assignment with a miss price per row.
pub fn solve_lap_with_misses(c: &CostMatrix, miss_costs: &[f64]) -> Result<Assignment> {
    check_miss_costs(c, miss_costs)?;
    let n = c.rows();
    let m = c.cols();
    if n == 0 {
        return Ok(Assignment::evaluate(c, miss_costs, Vec::new()));
    }
    let width = m + n;
    let cost = |i: usize, j: usize| -> f64 {
        if j < m {
            c.get(i, j)
        } else if j - m == i {
            miss_costs[i]
        } else {
            f64::INFINITY
        }
    };

    // 1-based potentials; column 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; width + 1];
    let mut p = vec![0usize; width + 1];
    let mut way = vec![0usize; width + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; width + 1];
        let mut used = vec![false; width + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=width {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(delta.is_finite(), "the private miss column keeps every row feasible");
            for j in 0..=width {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut rows = vec![None; n];
    for j in 1..=m {
        if p[j] > 0 {
            rows[p[j] - 1] = Some(j - 1);
        }
    }
    Ok(Assignment::evaluate(c, miss_costs, rows))
}

/// Exhaustive search over all row → (column | miss) injections.
///
/// Among equal-cost optima the lexicographically smallest choice vector wins,
/// with columns ordered by index and the miss option after every column.
pub fn brute_force_lap(c: &CostMatrix, miss_cost: f64) -> Result<Assignment> {
    brute_force_lap_with_misses(c, &vec![miss_cost; c.rows()])
}

pub fn brute_force_lap_with_misses(c: &CostMatrix, miss_costs: &[f64]) -> Result<Assignment> {
    check_miss_costs(c, miss_costs)?;
    if c.rows() > BRUTE_FORCE_MAX_ROWS {
        return Err(Error::SizeLimit {
            size: c.rows(),
            limit: BRUTE_FORCE_MAX_ROWS,
        });
    }
    let mut best: Option<Assignment> = None;
    let mut current = Vec::with_capacity(c.rows());
    let mut used = vec![false; c.cols()];
    enumerate(c, miss_costs, &mut current, &mut used, &mut best);
    Ok(best.expect("the all-miss assignment always exists"))
}

fn enumerate(
    c: &CostMatrix,
    miss_costs: &[f64],
    current: &mut Vec<Option<usize>>,
    used: &mut [bool],
    best: &mut Option<Assignment>,
) {
    if current.len() == c.rows() {
        let cost = total_cost(c, miss_costs, current);
        if best.as_ref().is_none_or(|b| cost < b.total_cost) {
            *best = Some(Assignment {
                rows: current.clone(),
                total_cost: cost,
            });
        }
        return;
    }
    for j in 0..c.cols() {
        if !used[j] {
            used[j] = true;
            current.push(Some(j));
            enumerate(c, miss_costs, current, used, best);
            current.pop();
            used[j] = false;
        }
    }
    current.push(None);
    enumerate(c, miss_costs, current, used, best);
    current.pop();
}
