//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::param::Parameterized;
use crate::error::Result;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries whose true gradient
/// is numerically zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(param index, entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Compares the analytic gradient from `with_grads` (which must clear and
/// fill every `Param::grad`) against central differences of `loss_only`.
///
/// With `max_entries = Some(k)` at most `k` randomly chosen entries per
/// parameter block are probed.
pub fn check_gradients<M, R, L, G>(
    model: &mut M,
    step: f64,
    max_entries: Option<usize>,
    rng: &mut R,
    loss_only: L,
    mut with_grads: G,
) -> Result<GradCheckReport>
where
    M: Parameterized,
    R: Rng + ?Sized,
    L: Fn(&M) -> Result<f64>,
    G: FnMut(&mut M) -> Result<f64>,
{
    model.zero_grads();
    with_grads(model)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport::default();
    for (pi, grads) in analytic.iter().enumerate() {
        let entries: Vec<usize> = match max_entries {
            Some(k) if k < grads.len() => sample(rng, grads.len(), k).into_vec(),
            _ => (0..grads.len()).collect(),
        };
        for e in entries {
            let orig = model.params()[pi].value.data()[e];
            model.params_mut()[pi].value.data_mut()[e] = orig + step;
            let plus = loss_only(model)?;
            model.params_mut()[pi].value.data_mut()[e] = orig - step;
            let minus = loss_only(model)?;
            model.params_mut()[pi].value.data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grads[e], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((pi, e));
                }
            }
        }
    }
    Ok(report)
}
