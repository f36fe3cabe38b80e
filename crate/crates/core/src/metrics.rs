//! CLEAR MOT evaluation.
//!
//! Per frame, ground-truth boxes are matched to hypotheses by IoU. A
//! correspondence from the previous frame is kept while its IoU stays at or
//! above the threshold; the remaining boxes are matched by a minimum-cost
//! assignment that first maximizes the number of valid pairs and then
//! minimizes `Σ (1 − IoU)`.

use std::collections::{HashMap, HashSet};

use crate::assignment::{solve_lap, CostMatrix};
use crate::error::{Error, Result};
use crate::types::{TrackRow, TrackTable};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Miss price in the per-frame matching; large enough that every valid pair
/// (cost ≤ 1) is preferred over leaving it unmatched.
const UNMATCHED_COST: f64 = 1000.0;
const FORBIDDEN_COST: f64 = 2.0 * UNMATCHED_COST;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalResult {
    pub recall: f64,
    pub precision: f64,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    /// `1 − (FN + FP + IDs) / total_gt` (denominator floored at 1).
    pub mota: f64,
    /// Mean IoU over matched pairs.
    pub motp: f64,
    pub total_gt: usize,
    pub matches: usize,
    pub gt_tracks: usize,
}

impl EvalResult {
    fn set_rates(&mut self, iou_sum: f64) {
        let tp = self.matches as f64;
        self.recall = if self.total_gt > 0 { tp / self.total_gt as f64 } else { 0.0 };
        let claimed = self.matches + self.false_positives;
        self.precision = if claimed > 0 { tp / claimed as f64 } else { 0.0 };
        let errors = (self.false_negatives + self.false_positives + self.id_switches) as f64;
        self.mota = 1.0 - errors / self.total_gt.max(1) as f64;
        self.motp = if self.matches > 0 { iou_sum / tp } else { 0.0 };
    }

    /// Pools the counts of several evaluations and recomputes the rates.
    pub fn combine(parts: &[EvalResult]) -> EvalResult {
        let mut out = EvalResult::default();
        let mut iou_sum = 0.0;
        for p in parts {
            out.mostly_tracked += p.mostly_tracked;
            out.partially_tracked += p.partially_tracked;
            out.mostly_lost += p.mostly_lost;
            out.false_positives += p.false_positives;
            out.false_negatives += p.false_negatives;
            out.id_switches += p.id_switches;
            out.fragmentations += p.fragmentations;
            out.total_gt += p.total_gt;
            out.matches += p.matches;
            out.gt_tracks += p.gt_tracks;
            iou_sum += p.motp * p.matches as f64;
        }
        out.set_rates(iou_sum);
        out
    }

    pub const CSV_HEADER: &'static str = "Rcll,Prcn,MT,ML,FP,FN,IDs,FM,MOTA,MOTP";

    /// One summary row in the column order of the header.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{},{},{},{},{},{},{:.4},{:.4}",
            self.recall,
            self.precision,
            self.mostly_tracked,
            self.mostly_lost,
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.fragmentations,
            self.mota,
            self.motp
        )
    }
}

fn check_unique(rows: &[TrackRow], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for r in rows {
        if !seen.insert(r.id) {
            return Err(Error::InvalidInput(format!(
                "{what} has id {} twice in frame {}",
                r.id, r.frame
            )));
        }
    }
    Ok(())
}

#[derive(Default)]
struct GtProgress {
    frames: usize,
    matched: usize,
    last_hyp: Option<u64>,
    interrupted: bool,
}

/// Accumulates CLEAR MOT counts of `hyp` against `gt`.
pub fn evaluate(gt: &TrackTable, hyp: &TrackTable, iou_threshold: f64) -> Result<EvalResult> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::invalid("IoU threshold must lie in [0, 1]"));
    }
    let gt_frames = gt.by_frame();
    let hyp_frames = hyp.by_frame();
    let mut frames: Vec<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let empty = Vec::new();
    let mut progress: HashMap<u64, GtProgress> = HashMap::new();
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut out = EvalResult::default();
    let mut iou_sum = 0.0;

    for t in frames {
        let gts = gt_frames.get(&t).unwrap_or(&empty);
        let hyps = hyp_frames.get(&t).unwrap_or(&empty);
        check_unique(gts, "ground truth")?;
        check_unique(hyps, "hypothesis set")?;
        out.total_gt += gts.len();

        let mut gt_match: Vec<Option<usize>> = vec![None; gts.len()];
        let mut hyp_used = vec![false; hyps.len()];

        for (gi, g) in gts.iter().enumerate() {
            let Some(&prev_h) = previous.get(&g.id) else { continue };
            if let Some(hi) = hyps.iter().position(|h| h.id == prev_h) {
                if !hyp_used[hi] && g.state.iou(&hyps[hi].state) >= iou_threshold {
                    gt_match[gi] = Some(hi);
                    hyp_used[hi] = true;
                }
            }
        }

        let free_g: Vec<usize> = (0..gts.len()).filter(|i| gt_match[*i].is_none()).collect();
        let free_h: Vec<usize> = (0..hyps.len()).filter(|j| !hyp_used[*j]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let mut data = Vec::with_capacity(free_g.len() * free_h.len());
            for &gi in &free_g {
                for &hj in &free_h {
                    let iou = gts[gi].state.iou(&hyps[hj].state);
                    data.push(if iou >= iou_threshold { 1.0 - iou } else { FORBIDDEN_COST });
                }
            }
            let c = CostMatrix::new(free_g.len(), free_h.len(), data)?;
            let a = solve_lap(&c, UNMATCHED_COST)?;
            for (r, col) in a.rows.iter().enumerate() {
                if let Some(col) = col {
                    if c.get(r, *col) < UNMATCHED_COST {
                        gt_match[free_g[r]] = Some(free_h[*col]);
                        hyp_used[free_h[*col]] = true;
                    }
                }
            }
        }

        previous.clear();
        for (gi, g) in gts.iter().enumerate() {
            let p = progress.entry(g.id).or_default();
            p.frames += 1;
            match gt_match[gi] {
                Some(hi) => {
                    let h = &hyps[hi];
                    out.matches += 1;
                    p.matched += 1;
                    iou_sum += g.state.iou(&h.state);
                    if p.last_hyp.is_some_and(|last| last != h.id) {
                        out.id_switches += 1;
                    }
                    if p.interrupted {
                        out.fragmentations += 1;
                        p.interrupted = false;
                    }
                    p.last_hyp = Some(h.id);
                    previous.insert(g.id, h.id);
                }
                None => {
                    out.false_negatives += 1;
                    if p.last_hyp.is_some() {
                        p.interrupted = true;
                    }
                }
            }
        }
        out.false_positives += hyp_used.iter().filter(|u| !**u).count();
    }

    out.gt_tracks = progress.len();
    for p in progress.values() {
        let ratio = p.matched as f64 / p.frames as f64;
        if ratio > 0.8 {
            out.mostly_tracked += 1;
        } else if ratio < 0.2 {
            out.mostly_lost += 1;
        } else {
            out.partially_tracked += 1;
        }
    }
    out.set_rates(iou_sum);
    Ok(out)
}
