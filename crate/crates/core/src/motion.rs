//! Per-target recurrent motion model.
//!
//! One step for a track with state `x`, existence `e`, previous miss
//! probability `m` and hidden state `h`:
//!
//! ```text
//! h'  = tanh(W_core [x; Δ; e; m; h; 1])
//! x*  = W_pred [h'; x; Δ; 1]
//! w   = Σ_j a_j z_j + a_miss x*
//! q   = tanh(W_upd [w; x*; h'; 1])
//! x'  = W_out [q; w; 1]
//! e'  = σ(W_ex [h'; e; a_miss; 1])
//! ```
//!
//! where `Δ` is the displacement of the box over the previous frame (zero for
//! a new track). All tracks share the weights; each owns its hidden state.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::datagen::{sample_sequence_with_rng, SceneConfig, SceneSequence, TrajectoryModel};
use crate::error::{Error, Result};
use crate::nn::rnn::RnnCache;
use crate::nn::{seeded_rng, sigmoid, Checkpoint, Dense, LrSchedule, ModelKind, Param, Parameterized, RmsProp, RnnCell};
use crate::types::{MeasurementFrame, Source, TargetState, STATE_DIM};

/// Core input: state, displacement, existence and miss probability.
pub const MOTION_INPUT: usize = 2 * STATE_DIM + 2;
pub const BCE_EPS: f64 = 1e-7;
/// Allowed deviation of an assignment row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub kappa: f64,
    pub nu: f64,
    pub xi: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            kappa: 1.0,
            nu: 1.0,
            xi: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda, self.kappa, self.nu, self.xi]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::invalid("loss weights must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Unweighted per-frame averages of the four loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub prediction: f64,
    pub update: f64,
    pub existence: f64,
    pub smoothness: f64,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.lambda * self.prediction + w.kappa * self.update + w.nu * self.existence + w.xi * self.smoothness
    }

    fn add_scaled(&mut self, other: &LossTerms, k: f64) {
        self.prediction += k * other.prediction;
        self.update += k * other.update;
        self.existence += k * other.existence;
        self.smoothness += k * other.smoothness;
    }
}

/// Binary cross entropy with `e` clamped to `[BCE_EPS, 1 − BCE_EPS]`.
pub fn bce_term(e: f64, e_gt: f64) -> f64 {
    let e = e.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(e_gt * e.ln() + (1.0 - e_gt) * (1.0 - e).ln())
}

fn bce_grad(e: f64, e_gt: f64) -> f64 {
    if e < BCE_EPS || e > 1.0 - BCE_EPS {
        return 0.0;
    }
    -e_gt / e + (1.0 - e_gt) / (1.0 - e)
}

fn sq_dist(a: &TargetState, b: &TargetState) -> f64 {
    let d = a.distance(b);
    d * d
}

/// Per-frame averaged loss terms; location terms are skipped where
/// `gt_states[t]` is `None`.
pub fn motion_loss_terms(
    x_star_seq: &[TargetState],
    x_seq: &[TargetState],
    e_seq: &[f64],
    e_diff_seq: &[f64],
    gt_states: &[Option<TargetState>],
    gt_existence: &[f64],
) -> Result<LossTerms> {
    let t = x_star_seq.len();
    if [x_seq.len(), e_seq.len(), e_diff_seq.len(), gt_states.len(), gt_existence.len()]
        .iter()
        .any(|&n| n != t)
    {
        return Err(Error::invalid("motion_loss sequences differ in length"));
    }
    if t == 0 {
        return Err(Error::invalid("motion_loss needs at least one frame"));
    }
    let d = STATE_DIM as f64;
    let mut terms = LossTerms::default();
    for k in 0..t {
        let finite = x_star_seq[k].is_finite()
            && x_seq[k].is_finite()
            && e_seq[k].is_finite()
            && e_diff_seq[k].is_finite()
            && gt_existence[k].is_finite()
            && gt_states[k].is_none_or(|g| g.is_finite());
        if !finite {
            return Err(Error::numeric(k + 1, "non-finite motion loss input"));
        }
        if let Some(g) = &gt_states[k] {
            terms.prediction += sq_dist(&x_star_seq[k], g) / d;
            terms.update += sq_dist(&x_seq[k], g) / d;
        }
        terms.existence += bce_term(e_seq[k], gt_existence[k]);
        terms.smoothness += e_diff_seq[k].abs();
    }
    let mut avg = LossTerms::default();
    avg.add_scaled(&terms, 1.0 / t as f64);
    Ok(avg)
}

pub fn motion_loss(
    x_star_seq: &[TargetState],
    x_seq: &[TargetState],
    e_seq: &[f64],
    e_diff_seq: &[f64],
    gt_states: &[Option<TargetState>],
    gt_existence: &[f64],
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    motion_loss_terms(x_star_seq, x_seq, e_seq, e_diff_seq, gt_states, gt_existence).map(|t| t.total(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionNetConfig {
    pub hidden_size: usize,
    /// Width of the hidden layer of the update head.
    pub update_hidden: usize,
}

impl Default for MotionNetConfig {
    fn default() -> Self {
        Self {
            hidden_size: 300,
            update_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionNet {
    pub core: RnnCell,
    pub predict_head: Dense,
    pub update_hidden: Dense,
    pub update_out: Dense,
    pub existence_head: Dense,
}

/// Everything a live track carries between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub state: TargetState,
    /// The box one frame earlier (equal to `state` for a new track).
    pub prev_state: TargetState,
    pub hidden: Vec<f64>,
    pub existence: f64,
    pub last_miss: f64,
}

/// Output of the prediction half of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub x_star: TargetState,
    pub hidden: Vec<f64>,
}

/// Output of a full step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_star: TargetState,
    pub next: FilterState,
    pub e_diff: f64,
}

/// Checks that `a_row` is a distribution over `frame.capacity()` slots plus
/// MISS, zeroes masked slots and renormalizes.
pub fn normalize_row(a_row: &[f64], frame: &MeasurementFrame) -> Result<Vec<f64>> {
    let m = frame.capacity();
    if a_row.len() != m + 1 {
        return Err(Error::invalid(format!(
            "assignment row has {} entries, expected {}",
            a_row.len(),
            m + 1
        )));
    }
    if a_row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("assignment row entries must be finite and >= 0"));
    }
    let sum: f64 = a_row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::invalid(format!("assignment row sums to {sum}, expected 1")));
    }
    let mut row = a_row.to_vec();
    for (j, v) in row.iter_mut().enumerate().take(m) {
        if !frame.is_occupied(j) {
            *v = 0.0;
        }
    }
    let kept: f64 = row.iter().sum();
    if kept > 0.0 {
        row.iter_mut().for_each(|v| *v /= kept);
    } else {
        row[m] = 1.0;
    }
    Ok(row)
}

/// `Σ_j a_j z_j + a_miss x*` for an already normalized row.
fn weight_measurements(x_star: &TargetState, frame: &MeasurementFrame, row: &[f64]) -> [f64; STATE_DIM] {
    let m = frame.capacity();
    let mut w = x_star.to_array().map(|v| v * row[m]);
    for (j, det) in frame.occupied() {
        let z = det.state.to_array();
        for d in 0..STATE_DIM {
            w[d] += row[j] * z[d];
        }
    }
    w
}

/// The assignment-weighted measurement vector fed to the update head.
pub fn weighted_input(x_star: &TargetState, frame: &MeasurementFrame, a_row: &[f64]) -> Result<TargetState> {
    let row = normalize_row(a_row, frame)?;
    Ok(TargetState::from_slice(&weight_measurements(x_star, frame, &row)))
}

struct StepCache {
    core: RnnCache,
    z_pred: Vec<f64>,
    z_upd: Vec<f64>,
    q: Vec<f64>,
    z_out: Vec<f64>,
    z_ex: Vec<f64>,
    x_star: TargetState,
    x: TargetState,
    e: f64,
    e_prev: f64,
}

struct Trace {
    steps: Vec<StepCache>,
    terms: LossTerms,
}

impl MotionNet {
    /// Random initialization, except that the skip paths `x → x*` and
    /// `w → x'` start at the identity, so an untrained net already behaves
    /// like a persistence predictor that adopts its assigned measurement.
    pub fn new<R: Rng + ?Sized>(cfg: MotionNetConfig, rng: &mut R) -> Self {
        let h = cfg.hidden_size;
        let mut net = Self {
            core: RnnCell::new(MOTION_INPUT, h, rng),
            predict_head: Dense::new(h + 2 * STATE_DIM, STATE_DIM, rng),
            update_hidden: Dense::new(2 * STATE_DIM + h, cfg.update_hidden, rng),
            update_out: Dense::new(cfg.update_hidden + STATE_DIM, STATE_DIM, rng),
            existence_head: Dense::new(h + 2, 1, rng),
        };
        let uh = cfg.update_hidden;
        for d in 0..STATE_DIM {
            net.predict_head.weights.value.set(d, h + d, 1.0);
            net.update_out.weights.value.set(d, uh + d, 1.0);
        }
        net
    }

    pub fn zeros(cfg: MotionNetConfig) -> Self {
        let h = cfg.hidden_size;
        Self {
            core: RnnCell::zeros(MOTION_INPUT, h),
            predict_head: Dense::zeros(h + 2 * STATE_DIM, STATE_DIM),
            update_hidden: Dense::zeros(2 * STATE_DIM + h, cfg.update_hidden),
            update_out: Dense::zeros(cfg.update_hidden + STATE_DIM, STATE_DIM),
            existence_head: Dense::zeros(h + 2, 1),
        }
    }

    pub fn config(&self) -> MotionNetConfig {
        MotionNetConfig {
            hidden_size: self.core.hidden_size,
            update_hidden: self.update_hidden.output_size,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.core.hidden_size
    }

    /// A new track at `z` with zero hidden state.
    pub fn initial_state(&self, z: TargetState, existence: f64) -> FilterState {
        FilterState {
            state: z,
            prev_state: z,
            hidden: vec![0.0; self.hidden_size()],
            existence,
            last_miss: 0.0,
        }
    }

    fn displacement(x: &TargetState, prev: &TargetState) -> [f64; STATE_DIM] {
        [x.x - prev.x, x.y - prev.y, x.w - prev.w, x.h - prev.h]
    }

    fn core_input(x: &TargetState, delta: &[f64; STATE_DIM], e: f64, miss: f64) -> Vec<f64> {
        let mut u = Vec::with_capacity(MOTION_INPUT);
        u.extend_from_slice(&x.to_array());
        u.extend_from_slice(delta);
        u.push(e);
        u.push(miss);
        u
    }

    /// Next hidden state and predicted box from the current box `x_t` and
    /// the box one frame earlier.
    pub fn predict(
        &self,
        x_t: &TargetState,
        x_prev: &TargetState,
        e_t: f64,
        last_miss: f64,
        h_t: &[f64],
    ) -> Result<(TargetState, Vec<f64>)> {
        if !x_t.is_finite() || !x_prev.is_finite() || !e_t.is_finite() || !last_miss.is_finite() {
            return Err(Error::invalid("predict input is not finite"));
        }
        let delta = Self::displacement(x_t, x_prev);
        let h = self.core.step(&Self::core_input(x_t, &delta, e_t, last_miss), h_t)?;
        let (xs, _) = self.predict_head.forward(&[&h[..], &x_t.to_array(), &delta].concat());
        Ok((TargetState::from_slice(&xs), h))
    }

    /// Updated box from the prediction and the assignment-weighted measurements.
    pub fn update(&self, x_star: &TargetState, z_next: &MeasurementFrame, a_row: &[f64], h: &[f64]) -> Result<TargetState> {
        if h.len() != self.hidden_size() {
            return Err(Error::invalid("hidden state has the wrong size"));
        }
        let row = normalize_row(a_row, z_next)?;
        Ok(self.update_normalized(x_star, z_next, &row, h))
    }

    fn update_normalized(&self, x_star: &TargetState, frame: &MeasurementFrame, row: &[f64], h: &[f64]) -> TargetState {
        let w = weight_measurements(x_star, frame, row);
        let (mut q, _) = self.update_hidden.forward(&[&w[..], &x_star.to_array(), h].concat());
        q.iter_mut().for_each(|v| *v = v.tanh());
        let (x, _) = self.update_out.forward(&[&q[..], &w].concat());
        TargetState::from_slice(&x)
    }

    /// `(e_next, |e_next − e_t|)` given this frame's miss probability.
    pub fn existence(&self, h_next: &[f64], e_t: f64, a_miss: f64) -> Result<(f64, f64)> {
        if h_next.len() != self.hidden_size() {
            return Err(Error::invalid("hidden state has the wrong size"));
        }
        if !(0.0..=1.0).contains(&e_t) || !(0.0..=1.0).contains(&a_miss) {
            return Err(Error::invalid("existence and miss probability must lie in [0, 1]"));
        }
        let (l, _) = self.existence_head.forward(&[h_next, &[e_t, a_miss]].concat());
        let e = sigmoid(l[0]);
        Ok((e, (e - e_t).abs()))
    }

    /// Prediction half of a step for a live track.
    pub fn begin_step(&self, f: &FilterState) -> Result<Prediction> {
        let (x_star, hidden) = self.predict(&f.state, &f.prev_state, f.existence, f.last_miss, &f.hidden)?;
        Ok(Prediction { x_star, hidden })
    }

    /// Update and existence half of a step once the assignment row is known.
    pub fn finish_step(&self, f: &FilterState, p: &Prediction, frame: &MeasurementFrame, a_row: &[f64]) -> Result<StepOutput> {
        let row = normalize_row(a_row, frame)?;
        let a_miss = row[frame.capacity()];
        let x = self.update_normalized(&p.x_star, frame, &row, &p.hidden);
        let (e, e_diff) = self.existence(&p.hidden, f.existence, a_miss)?;
        if !x.is_finite() || !e.is_finite() {
            return Err(Error::numeric(frame.frame as usize, "motion step produced non-finite output"));
        }
        Ok(StepOutput {
            x_star: p.x_star,
            next: FilterState {
                state: x,
                prev_state: f.state,
                hidden: p.hidden.clone(),
                existence: e,
                last_miss: a_miss,
            },
            e_diff,
        })
    }

    pub fn step(&self, f: &FilterState, frame: &MeasurementFrame, a_row: &[f64]) -> Result<StepOutput> {
        let p = self.begin_step(f)?;
        self.finish_step(f, &p, frame, a_row)
    }

    fn run_episode(&self, ep: &Episode) -> Result<Trace> {
        if ep.steps.is_empty() {
            return Err(Error::invalid("episode has no steps"));
        }
        let mut x = ep.start;
        let mut x_prev = ep.start;
        let mut e = ep.init_existence;
        let mut miss = 0.0;
        let mut h = vec![0.0; self.hidden_size()];
        let mut steps = Vec::with_capacity(ep.steps.len());
        let (mut xs_seq, mut x_seq, mut e_seq, mut ed_seq) = (vec![], vec![], vec![], vec![]);
        for s in &ep.steps {
            let row = normalize_row(&s.a_row, &s.frame)?;
            let a_miss = row[s.frame.capacity()];
            let delta = Self::displacement(&x, &x_prev);
            let core = self.core.forward(&Self::core_input(&x, &delta, e, miss), &h);
            let (xs, z_pred) = self.predict_head.forward(&[&core.h[..], &x.to_array(), &delta].concat());
            let x_star = TargetState::from_slice(&xs);
            let w = weight_measurements(&x_star, &s.frame, &row);
            let (mut q, z_upd) = self.update_hidden.forward(&[&w[..], &xs, &core.h].concat());
            q.iter_mut().for_each(|v| *v = v.tanh());
            let (xn, z_out) = self.update_out.forward(&[&q[..], &w].concat());
            let (l, z_ex) = self.existence_head.forward(&[&core.h[..], &[e, a_miss]].concat());
            let en = sigmoid(l[0]);
            let x_new = TargetState::from_slice(&xn);
            xs_seq.push(x_star);
            x_seq.push(x_new);
            e_seq.push(en);
            ed_seq.push((en - e).abs());
            h = core.h.clone();
            steps.push(StepCache {
                core,
                z_pred,
                z_upd,
                q,
                z_out,
                z_ex,
                x_star,
                x: x_new,
                e: en,
                e_prev: e,
            });
            x_prev = x;
            x = x_new;
            e = en;
            miss = a_miss;
        }
        let gt: Vec<Option<TargetState>> = ep.steps.iter().map(|s| s.gt).collect();
        let ge: Vec<f64> = ep.steps.iter().map(|s| s.gt_existence).collect();
        let terms = motion_loss_terms(&xs_seq, &x_seq, &e_seq, &ed_seq, &gt, &ge)?;
        Ok(Trace { steps, terms })
    }

    /// Loss terms of one training episode.
    pub fn episode_terms(&self, ep: &Episode) -> Result<LossTerms> {
        Ok(self.run_episode(ep)?.terms)
    }

    pub fn episode_loss(&self, ep: &Episode, w: &LossWeights) -> Result<f64> {
        Ok(self.episode_terms(ep)?.total(w))
    }

    /// Adds `scale · dL/dθ` for one episode to the parameter gradients.
    pub fn accumulate_gradients(&mut self, ep: &Episode, w: &LossWeights, scale: f64) -> Result<LossTerms> {
        let trace = self.run_episode(ep)?;
        let k = trace.steps.len();
        let hsz = self.hidden_size();
        let d = STATE_DIM as f64;
        let c = scale / k as f64;
        // dx_acc[t]: gradient w.r.t. the updated box of step t from later steps.
        let mut dx_acc = vec![[0.0; STATE_DIM]; k];
        let mut de_next = 0.0;
        let mut dh_next = vec![0.0; hsz];
        for (t, s) in trace.steps.iter().enumerate().rev() {
            let step = &ep.steps[t];
            let frame = &step.frame;
            let m = frame.capacity();
            let row = normalize_row(&step.a_row, frame)?;

            let mut dx = dx_acc[t];
            let mut dxs = [0.0; STATE_DIM];
            if let Some(g) = &step.gt {
                let (ga, xa, xsa) = (g.to_array(), s.x.to_array(), s.x_star.to_array());
                for i in 0..STATE_DIM {
                    dx[i] += c * w.kappa * 2.0 * (xa[i] - ga[i]) / d;
                    dxs[i] += c * w.lambda * 2.0 * (xsa[i] - ga[i]) / d;
                }
            }
            let sign = (s.e - s.e_prev).signum() * if s.e == s.e_prev { 0.0 } else { 1.0 };
            let de = de_next + c * (w.nu * bce_grad(s.e, step.gt_existence) + w.xi * sign);
            let mut de_prev = -c * w.xi * sign;

            let dl = de * s.e * (1.0 - s.e);
            let dz_ex = self.existence_head.backward(&s.z_ex, &[dl]);
            de_prev += dz_ex[hsz];

            let dz_out = self.update_out.backward(&s.z_out, &dx);
            let uh = self.update_hidden.output_size;
            let dq: Vec<f64> = dz_out[..uh].iter().zip(&s.q).map(|(g, q)| g * (1.0 - q * q)).collect();
            let mut dw = [0.0; STATE_DIM];
            dw.copy_from_slice(&dz_out[uh..]);
            let dz_upd = self.update_hidden.backward(&s.z_upd, &dq);
            for i in 0..STATE_DIM {
                dw[i] += dz_upd[i];
                dxs[i] += dz_upd[STATE_DIM + i] + row[m] * dw[i];
            }
            let dz_pred = self.predict_head.backward(&s.z_pred, &dxs);

            let mut dh = dh_next.clone();
            for i in 0..hsz {
                dh[i] += dz_pred[i] + dz_upd[2 * STATE_DIM + i] + dz_ex[i];
            }
            let (du, dh_prev) = self.core.backward(&s.core, &dh);
            for i in 0..STATE_DIM {
                let d_delta = du[STATE_DIM + i] + dz_pred[hsz + STATE_DIM + i];
                if t >= 1 {
                    dx_acc[t - 1][i] += du[i] + dz_pred[hsz + i] + d_delta;
                }
                if t >= 2 {
                    dx_acc[t - 2][i] -= d_delta;
                }
            }
            de_next = du[2 * STATE_DIM] + de_prev;
            dh_next = dh_prev;
        }
        Ok(trace.terms)
    }

    pub fn to_checkpoint(&self, iteration: u64) -> Checkpoint {
        let cfg = self.config();
        Checkpoint::capture(
            ModelKind::Motion,
            iteration,
            vec![MOTION_INPUT as u32, cfg.hidden_size as u32, cfg.update_hidden as u32],
            self,
        )
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.kind != ModelKind::Motion {
            return Err(Error::Checkpoint(format!("expected a motion checkpoint, found {:?}", cp.kind)));
        }
        if cp.size(0)? != MOTION_INPUT {
            return Err(Error::Checkpoint("motion checkpoint has an unexpected input size".into()));
        }
        let mut net = Self::zeros(MotionNetConfig {
            hidden_size: cp.size(1)?,
            update_hidden: cp.size(2)?,
        });
        cp.restore_into(&mut net)?;
        Ok(net)
    }
}

impl Parameterized for MotionNet {
    fn params(&self) -> Vec<&Param> {
        vec![
            &self.core.weights,
            &self.predict_head.weights,
            &self.update_hidden.weights,
            &self.update_out.weights,
            &self.existence_head.weights,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.core.weights,
            &mut self.predict_head.weights,
            &mut self.update_hidden.weights,
            &mut self.update_out.weights,
            &mut self.existence_head.weights,
        ]
    }
}

/// One frame of a training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub frame: MeasurementFrame,
    pub a_row: Vec<f64>,
    /// Ground-truth box, or `None` where the location terms do not apply.
    pub gt: Option<TargetState>,
    pub gt_existence: f64,
}

/// A track started at `start` and stepped through `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub start: TargetState,
    pub init_existence: f64,
    pub steps: Vec<EpisodeStep>,
}

fn one_hot(len: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub init_existence: f64,
    /// Frames kept after a target's death.
    pub max_after_death: u32,
    /// Clutter-started episodes per real track.
    pub clutter_ratio: f64,
    pub clutter_length: u32,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            init_existence: 0.5,
            max_after_death: 5,
            clutter_ratio: 0.5,
            clutter_length: 5,
        }
    }
}

/// Training episodes mirroring how the tracker spawns and feeds tracks: every
/// ground-truth track starts at its first detection and receives its own
/// detections as one-hot rows; a sample of false alarms starts episodes whose
/// target existence is 0 throughout.
pub fn episodes_from_scene<R: Rng + ?Sized>(scene: &SceneSequence, opts: &EpisodeOptions, rng: &mut R) -> Vec<Episode> {
    let t_max = scene.seq_length();
    let mut out = Vec::new();
    for track in &scene.gt_tracks {
        let mut start = None;
        for t in track.birth..=track.death {
            let frame = scene.frame(t);
            if let Some((_, d)) = frame.occupied().find(|(_, d)| d.source == Source::Track(track.id)) {
                start = Some((t, d.state));
                break;
            }
        }
        let Some((t0, z0)) = start else { continue };
        let last = t_max.min(track.death + opts.max_after_death);
        if t0 >= last {
            continue;
        }
        let steps = (t0 + 1..=last)
            .map(|t| {
                let frame = scene.frame(t).clone();
                let m = frame.capacity();
                let slot = frame.occupied().find(|(_, d)| d.source == Source::Track(track.id)).map(|(j, _)| j);
                EpisodeStep {
                    a_row: one_hot(m + 1, slot.unwrap_or(m)),
                    frame,
                    gt: track.state_at(t),
                    gt_existence: track.existence_at(t),
                }
            })
            .collect();
        out.push(Episode {
            start: z0,
            init_existence: opts.init_existence,
            steps,
        });
    }
    let clutter: Vec<(u32, TargetState)> = scene
        .frames
        .iter()
        .filter(|f| f.frame < t_max)
        .flat_map(|f| f.detections().filter(|d| d.source == Source::Clutter).map(move |d| (f.frame, d.state)))
        .collect();
    let wanted = ((out.len() as f64) * opts.clutter_ratio).round() as usize;
    for (t0, z0) in clutter.choose_multiple(rng, wanted.min(clutter.len())) {
        let last = t_max.min(t0 + opts.clutter_length);
        let steps = (t0 + 1..=last)
            .map(|t| {
                let frame = scene.frame(t).clone();
                let m = frame.capacity();
                EpisodeStep {
                    a_row: one_hot(m + 1, m),
                    frame,
                    gt: None,
                    gt_existence: 0.0,
                }
            })
            .collect();
        out.push(Episode {
            start: *z0,
            init_existence: opts.init_existence,
            steps,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub weights: LossWeights,
    pub episodes: EpisodeOptions,
    /// Curve points average the loss over this many iterations.
    pub log_every: u64,
}

impl Default for MotionTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            batch_size: 10,
            schedule: LrSchedule::default(),
            weights: LossWeights::default(),
            episodes: EpisodeOptions::default(),
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    pub loss: f64,
    pub terms: LossTerms,
}

/// Minibatch RMSprop on episodes drawn from freshly sampled scenes.
pub fn train_motion(
    net: &mut MotionNet,
    model: &TrajectoryModel,
    scene_cfg: &SceneConfig,
    cfg: &MotionTrainConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    cfg.weights.validate()?;
    if cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::invalid("batch_size and log_every must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let opt = RmsProp::default();
    let mut pool: Vec<Episode> = Vec::new();
    let mut curve = Vec::new();
    let mut window = LossTerms::default();
    let mut window_n = 0u64;
    for it in 0..cfg.iterations {
        net.zero_grads();
        let mut batch_terms = LossTerms::default();
        for _ in 0..cfg.batch_size {
            while pool.is_empty() {
                let scene = sample_sequence_with_rng(model, scene_cfg, &mut rng)?;
                pool = episodes_from_scene(&scene, &cfg.episodes, &mut rng);
                pool.reverse();
            }
            let ep = pool.pop().expect("pool refilled");
            let terms = net.accumulate_gradients(&ep, &cfg.weights, 1.0 / cfg.batch_size as f64)?;
            batch_terms.add_scaled(&terms, 1.0 / cfg.batch_size as f64);
        }
        let loss = batch_terms.total(&cfg.weights);
        if !loss.is_finite() {
            return Err(Error::numeric(it as usize, "motion training loss diverged"));
        }
        let lr = cfg.schedule.at(it);
        for p in net.params_mut() {
            opt.update(p, lr);
        }
        window.add_scaled(&batch_terms, 1.0);
        window_n += 1;
        if (it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations {
            let mut avg = LossTerms::default();
            avg.add_scaled(&window, 1.0 / window_n as f64);
            curve.push(CurvePoint {
                iteration: it + 1,
                loss: avg.total(&cfg.weights),
                terms: avg,
            });
            window = LossTerms::default();
            window_n = 0;
        }
    }
    Ok(curve)
}
