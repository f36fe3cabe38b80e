//! Learned data association.
//!
//! An LSTM stack reads the whole (padded, flattened) target-to-measurement
//! distance matrix once per target and emits, at step `i`, a distribution
//! over the `M` measurement slots plus MISS for target `i`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::assignment::{solve_lap, solve_lap_with_misses, Assignment, CostMatrix};
use crate::datagen::{sample_sequence_with_rng, SceneConfig, SceneSequence, TrajectoryModel};
use crate::error::{Error, Result};
use crate::nn::lstm::LstmCache;
use crate::nn::{
    masked_softmax, seeded_rng, Checkpoint, Dense, LrSchedule, LstmStack, LstmState, ModelKind, Param, Parameterized,
    RmsProp,
};
use crate::types::{MeasurementFrame, Source, TargetState};

/// Cost given to padded rows/columns and to empty measurement slots.
pub const PAD_COST: f64 = 10.0;

/// Distance scale of the affinity encoding fed to the association net.
pub const AFFINITY_SCALE: f64 = 0.1;

/// Probability floor inside `−ln` for the loss and for lap-mode costs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Allowed deviation of an assignment-matrix row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `C_ij = ‖x_i − z_j‖₂`; empty slots cost [`PAD_COST`].
pub fn build_cost_matrix(predicted: &[TargetState], frame: &MeasurementFrame) -> Result<CostMatrix> {
    let m = frame.capacity();
    let mut data = Vec::with_capacity(predicted.len() * m);
    for x in predicted {
        if !x.is_finite() {
            return Err(Error::invalid("predicted state is not finite"));
        }
        for j in 0..m {
            data.push(if frame.is_occupied(j) {
                x.distance(&frame.slot_state(j))
            } else {
                PAD_COST
            });
        }
    }
    CostMatrix::new(predicted.len(), m, data)
}

/// Columns holding at least one real distance; a column made only of
/// [`PAD_COST`] entries is an empty slot.
pub fn valid_columns(c: &CostMatrix) -> Vec<bool> {
    (0..c.cols())
        .map(|j| (0..c.rows()).any(|i| c.get(i, j) < PAD_COST))
        .collect()
}

/// `N × (M + 1)` row-stochastic matrix; column `M` is MISS.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    rows: Vec<Vec<f64>>,
    measurements: usize,
}

impl AssignmentMatrix {
    pub fn new(measurements: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != measurements + 1 {
                return Err(Error::invalid(format!("assignment row {i} has {} entries", r.len())));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("assignment row {i} has entries outside [0, 1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!("assignment row {i} sums to {s}")));
            }
        }
        Ok(Self { rows, measurements })
    }

    pub fn targets(&self) -> usize {
        self.rows.len()
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn miss(&self, i: usize) -> f64 {
        self.rows[i][self.measurements]
    }

    /// Row-wise argmax; ties go to the lowest index. `measurements()` is MISS.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, v)| if *v > best.1 { (j, *v) } else { best })
                    .0
            })
            .collect()
    }
}

/// `−ln A_{i,correct}` with the probability floored at [`PROB_FLOOR`].
pub fn da_loss(a_row: &[f64], correct: usize) -> Result<f64> {
    let p = a_row
        .get(correct)
        .ok_or_else(|| Error::invalid(format!("label {correct} outside a row of {}", a_row.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// For each target (by ground-truth id, `None` for a target without one) the
/// slot of its own detection in `frame`, or MISS (`frame.capacity()`).
pub fn make_training_labels(target_ids: &[Option<u64>], frame: &MeasurementFrame) -> Vec<usize> {
    let m = frame.capacity();
    target_ids
        .iter()
        .map(|id| {
            id.and_then(|id| frame.occupied().find(|(_, d)| d.source == Source::Track(id)).map(|(j, _)| j))
                .unwrap_or(m)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardAssignMode {
    /// Per-row argmax; may give one column to several rows.
    Argmax,
    /// One-to-one `solve_lap` on `−ln A` with `−ln A_miss` as the row's miss price.
    Lap,
}

pub fn infer_hard_assignment(a: &AssignmentMatrix, mode: HardAssignMode) -> Result<Assignment> {
    let m = a.measurements();
    let cost = |p: f64| -p.max(PROB_FLOOR).ln();
    let data: Vec<f64> = a.rows().iter().flat_map(|r| r[..m].iter().map(|p| cost(*p))).collect();
    let c = CostMatrix::new(a.targets(), m, data)?;
    let miss: Vec<f64> = (0..a.targets()).map(|i| cost(a.miss(i))).collect();
    match mode {
        HardAssignMode::Argmax => {
            let rows = a.argmax().into_iter().map(|j| (j < m).then_some(j)).collect();
            Ok(Assignment::evaluate(&c, &miss, rows))
        }
        HardAssignMode::Lap => solve_lap_with_misses(&c, &miss),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssocNetConfig {
    /// Largest number of targets (rows) the net accepts.
    pub n_max: usize,
    /// Largest number of measurement slots (columns) the net accepts.
    pub m_max: usize,
    pub embed_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    /// Also feed row `i` of `C` at step `i`.
    pub row_feature: bool,
}

impl Default for AssocNetConfig {
    fn default() -> Self {
        Self {
            n_max: 8,
            m_max: 10,
            embed_size: 500,
            hidden_size: 500,
            layers: 2,
            row_feature: true,
        }
    }
}

impl AssocNetConfig {
    pub fn input_size(&self) -> usize {
        self.n_max * self.m_max + self.n_max + if self.row_feature { self.m_max } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n_max, self.m_max, self.embed_size, self.hidden_size, self.layers].contains(&0) {
            return Err(Error::invalid("association net sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocNet {
    cfg: AssocNetConfig,
    pub embed: Dense,
    pub lstm: LstmStack,
    pub head: Dense,
}

struct RowCache {
    z_embed: Vec<f64>,
    lstm: Vec<LstmCache>,
    z_head: Vec<f64>,
    probs: Vec<f64>,
}

impl AssocNet {
    pub fn new<R: Rng + ?Sized>(cfg: AssocNetConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            embed: Dense::new(cfg.input_size(), cfg.embed_size, rng),
            lstm: LstmStack::new(cfg.embed_size, cfg.hidden_size, cfg.layers, rng),
            head: Dense::new(cfg.hidden_size, cfg.m_max + 1, rng),
        })
    }

    pub fn zeros(cfg: AssocNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut net = Self::new(cfg, &mut seeded_rng(0))?;
        for p in net.params_mut() {
            p.value.fill(0.0);
        }
        Ok(net)
    }

    pub fn config(&self) -> AssocNetConfig {
        self.cfg
    }

    fn check(&self, c: &CostMatrix) -> Result<()> {
        if c.rows() > self.cfg.n_max || c.cols() > self.cfg.m_max {
            return Err(Error::invalid(format!(
                "{}x{} problem exceeds the association net capacity {}x{}",
                c.rows(),
                c.cols(),
                self.cfg.n_max,
                self.cfg.m_max
            )));
        }
        Ok(())
    }

    /// Padded `n_max × m_max` affinities `exp(−C/AFFINITY_SCALE)`; empty
    /// slots and padding map to 0.
    fn padded(&self, c: &CostMatrix) -> Vec<f64> {
        let (n, m) = (self.cfg.n_max, self.cfg.m_max);
        let mut flat = vec![0.0; n * m];
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                let v = c.get(i, j);
                if v < PAD_COST {
                    flat[i * m + j] = (-v / AFFINITY_SCALE).exp();
                }
            }
        }
        flat
    }

    fn step_input(&self, flat: &[f64], i: usize) -> Vec<f64> {
        let (n, m) = (self.cfg.n_max, self.cfg.m_max);
        let mut x = Vec::with_capacity(self.cfg.input_size());
        x.extend_from_slice(flat);
        if self.cfg.row_feature {
            x.extend_from_slice(&flat[i * m..(i + 1) * m]);
        }
        let mut onehot = vec![0.0; n];
        onehot[i] = 1.0;
        x.extend_from_slice(&onehot);
        x
    }

    fn output_mask(&self, c: &CostMatrix) -> Vec<bool> {
        let mut mask = vec![false; self.cfg.m_max + 1];
        mask[..c.cols()].copy_from_slice(&valid_columns(c));
        mask[self.cfg.m_max] = true;
        mask
    }

    fn run(&self, c: &CostMatrix) -> Vec<RowCache> {
        let flat = self.padded(c);
        let mask = self.output_mask(c);
        let mut state: LstmState = self.lstm.zero_state();
        let mut out = Vec::with_capacity(c.rows());
        for i in 0..c.rows() {
            let (e, z_embed) = self.embed.forward(&self.step_input(&flat, i));
            let caches = self.lstm.forward(&e, &state);
            state = LstmStack::state_of(&caches);
            let (logits, z_head) = self.head.forward(&caches[caches.len() - 1].h);
            out.push(RowCache {
                z_embed,
                lstm: caches,
                z_head,
                probs: masked_softmax(&logits, &mask),
            });
        }
        out
    }

    fn to_matrix(&self, c: &CostMatrix, caches: &[RowCache]) -> Result<AssignmentMatrix> {
        let m = c.cols();
        let rows = caches
            .iter()
            .map(|rc| {
                let mut r = rc.probs[..m].to_vec();
                r.push(rc.probs[self.cfg.m_max]);
                r
            })
            .collect();
        AssignmentMatrix::new(m, rows)
    }

    /// One LSTM step per target row.
    pub fn forward(&self, c: &CostMatrix) -> Result<AssignmentMatrix> {
        self.check(c)?;
        let caches = self.run(c);
        self.to_matrix(c, &caches)
    }

    /// Mean `da_loss` over the rows of one instance.
    pub fn instance_loss(&self, inst: &AssocInstance) -> Result<f64> {
        self.check(&inst.cost)?;
        if inst.cost.rows() == 0 {
            return Ok(0.0);
        }
        let a = self.forward(&inst.cost)?;
        let mut total = 0.0;
        for (i, &l) in inst.labels.iter().enumerate() {
            total += da_loss(a.row(i), l)?;
        }
        Ok(total / inst.labels.len() as f64)
    }

    /// Adds `scale · dL/dθ` of the mean row loss; returns the loss.
    pub fn accumulate_gradients(&mut self, inst: &AssocInstance, scale: f64) -> Result<f64> {
        self.check(&inst.cost)?;
        let n = inst.cost.rows();
        if n == 0 {
            return Ok(0.0);
        }
        if inst.labels.len() != n {
            return Err(Error::invalid("instance labels do not match its rows"));
        }
        let m = inst.cost.cols();
        let caches = self.run(&inst.cost);
        let mut loss = 0.0;
        let k = scale / n as f64;
        let layers = self.cfg.layers;
        let mut dh = vec![vec![0.0; self.cfg.hidden_size]; layers];
        let mut dc = dh.clone();
        for i in (0..n).rev() {
            let rc = &caches[i];
            let label = if inst.labels[i] >= m { self.cfg.m_max } else { inst.labels[i] };
            let p = rc.probs[label];
            loss += -p.max(PROB_FLOOR).ln();
            let mut dlogits = vec![0.0; self.cfg.m_max + 1];
            if p >= PROB_FLOOR {
                for (j, q) in rc.probs.iter().enumerate() {
                    dlogits[j] = k * q;
                }
                dlogits[label] -= k;
            }
            let dtop = self.head.backward(&rc.z_head, &dlogits);
            let dinput = self.lstm.backward(&rc.lstm, &dtop, &mut dh, &mut dc);
            self.embed.backward(&rc.z_embed, &dinput);
        }
        Ok(loss / n as f64)
    }

    pub fn to_checkpoint(&self, iteration: u64) -> Checkpoint {
        let c = self.cfg;
        let sizes = [c.n_max, c.m_max, c.embed_size, c.hidden_size, c.layers, c.row_feature as usize];
        Checkpoint::capture(ModelKind::Association, iteration, sizes.iter().map(|s| *s as u32).collect(), self)
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.kind != ModelKind::Association {
            return Err(Error::Checkpoint(format!("expected an association checkpoint, found {:?}", cp.kind)));
        }
        let cfg = AssocNetConfig {
            n_max: cp.size(0)?,
            m_max: cp.size(1)?,
            embed_size: cp.size(2)?,
            hidden_size: cp.size(3)?,
            layers: cp.size(4)?,
            row_feature: cp.size(5)? != 0,
        };
        let mut net = Self::zeros(cfg).map_err(|e| Error::Checkpoint(e.to_string()))?;
        cp.restore_into(&mut net)?;
        Ok(net)
    }
}

/// Convenience wrapper matching the free-function form.
pub fn assoc_forward(net: &AssocNet, c: &CostMatrix) -> Result<AssignmentMatrix> {
    net.forward(c)
}

impl Parameterized for AssocNet {
    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.embed.weights];
        v.extend(self.lstm.params());
        v.push(&self.head.weights);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.embed.weights];
        v.extend(self.lstm.params_mut());
        v.push(&mut self.head.weights);
        v
    }
}

/// One association problem with its target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocInstance {
    pub cost: CostMatrix,
    /// Per row: a column index, or `cost.cols()` for MISS.
    pub labels: Vec<usize>,
    /// Per row: the slot of the target's own detection, if any.
    pub own: Vec<Option<usize>>,
}

impl AssocInstance {
    /// Smallest distance from a target to any valid slot that is not its own
    /// detection (`+∞` if there is none).
    pub fn separation(&self) -> f64 {
        let valid = valid_columns(&self.cost);
        let mut best = f64::INFINITY;
        for i in 0..self.cost.rows() {
            for (j, ok) in valid.iter().enumerate() {
                if *ok && self.own[i] != Some(j) {
                    best = best.min(self.cost.get(i, j));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Hungarian solution on the cost matrix with `miss_cost`.
    Oracle,
    /// The generator's provenance tags.
    Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOptions {
    /// Standard deviation of the noise added to ground truth to simulate predictions.
    pub prediction_noise: f64,
    /// Probability that a false alarm of the previous frame becomes a target row.
    pub candidate_prob: f64,
    pub miss_cost: f64,
    pub labels: LabelSource,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            prediction_noise: 0.01,
            candidate_prob: 0.5,
            miss_cost: 0.1,
            labels: LabelSource::Oracle,
        }
    }
}

/// Hungarian labels with a uniform miss price.
pub fn oracle_labels(c: &CostMatrix, miss_cost: f64) -> Result<Vec<usize>> {
    let a = solve_lap(c, miss_cost)?;
    Ok(a.rows.iter().map(|r| r.unwrap_or(c.cols())).collect())
}

/// One instance per frame `t ≥ 2`: rows are the targets alive at `t − 1`
/// (at a noisy copy of their true box) plus some false alarms of `t − 1`
/// posing as candidate tracks, shuffled and truncated to `n_max`.
pub fn instances_from_scene<R: Rng + ?Sized>(
    scene: &SceneSequence,
    n_max: usize,
    opts: &InstanceOptions,
    rng: &mut R,
) -> Result<Vec<AssocInstance>> {
    let noise = Normal::new(0.0, opts.prediction_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::new();
    for t in 2..=scene.seq_length() {
        let frame = scene.frame(t);
        let mut rows: Vec<(TargetState, Option<u64>)> = Vec::new();
        for track in &scene.gt_tracks {
            if let Some(prev) = track.state_at(t - 1) {
                let base = track.state_at(t).unwrap_or(prev);
                rows.push((base, Some(track.id)));
            }
        }
        for d in scene.frame(t - 1).detections() {
            if d.source == Source::Clutter && rng.random_bool(opts.candidate_prob) {
                rows.push((d.state, None));
            }
        }
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(rng);
        rows.truncate(n_max);
        let predicted: Vec<TargetState> = rows
            .iter()
            .map(|(s, _)| {
                let v: Vec<f64> = s.to_array().iter().map(|x| x + noise.sample(rng)).collect();
                TargetState::from_slice(&v)
            })
            .collect();
        let ids: Vec<Option<u64>> = rows.iter().map(|(_, id)| *id).collect();
        let cost = build_cost_matrix(&predicted, frame)?;
        let m = cost.cols();
        let own: Vec<Option<usize>> = make_training_labels(&ids, frame)
            .into_iter()
            .map(|j| (j < m).then_some(j))
            .collect();
        let labels = match opts.labels {
            LabelSource::Oracle => oracle_labels(&cost, opts.miss_cost)?,
            LabelSource::Provenance => own.iter().map(|j| j.unwrap_or(m)).collect(),
        };
        out.push(AssocInstance { cost, labels, own });
    }
    Ok(out)
}

/// Fraction of rows whose argmax equals the label.
pub fn row_agreement(net: &AssocNet, instances: &[AssocInstance]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in instances {
        let a = net.forward(&inst.cost)?;
        for (p, l) in a.argmax().iter().zip(&inst.labels) {
            hit += (p == l) as usize;
            total += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocTrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub instances: InstanceOptions,
    pub log_every: u64,
}

impl Default for AssocTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            batch_size: 10,
            schedule: LrSchedule::default(),
            instances: InstanceOptions::default(),
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocCurvePoint {
    pub iteration: u64,
    pub loss: f64,
    /// Training-batch row agreement with the labels.
    pub accuracy: f64,
}

/// Minibatch RMSprop on instances cut from freshly sampled scenes.
pub fn train_assoc(
    net: &mut AssocNet,
    model: &TrajectoryModel,
    scene_cfg: &SceneConfig,
    cfg: &AssocTrainConfig,
    seed: u64,
) -> Result<Vec<AssocCurvePoint>> {
    if cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::invalid("batch_size and log_every must be positive"));
    }
    if scene_cfg.max_detections > net.cfg.m_max {
        return Err(Error::invalid(format!(
            "scenes have {} detection slots but the net accepts {}",
            scene_cfg.max_detections, net.cfg.m_max
        )));
    }
    let mut rng = seeded_rng(seed);
    let opt = RmsProp::default();
    let mut pool: Vec<AssocInstance> = Vec::new();
    let mut curve = Vec::new();
    let (mut win_loss, mut win_hit, mut win_rows, mut win_n) = (0.0, 0usize, 0usize, 0u64);
    for it in 0..cfg.iterations {
        net.zero_grads();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            while pool.is_empty() {
                let scene = sample_sequence_with_rng(model, scene_cfg, &mut rng)?;
                pool = instances_from_scene(&scene, net.cfg.n_max, &cfg.instances, &mut rng)?;
                pool.reverse();
            }
            let inst = pool.pop().expect("pool refilled");
            batch_loss += net.accumulate_gradients(&inst, 1.0 / cfg.batch_size as f64)? / cfg.batch_size as f64;
            if (it + 1) % cfg.log_every == 0 {
                let a = net.forward(&inst.cost)?;
                for (p, l) in a.argmax().iter().zip(&inst.labels) {
                    win_hit += (p == l) as usize;
                    win_rows += 1;
                }
            }
        }
        if !batch_loss.is_finite() {
            return Err(Error::numeric(it as usize, "association training loss diverged"));
        }
        let lr = cfg.schedule.at(it);
        for p in net.params_mut() {
            opt.update(p, lr);
        }
        win_loss += batch_loss;
        win_n += 1;
        if (it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations {
            curve.push(AssocCurvePoint {
                iteration: it + 1,
                loss: win_loss / win_n as f64,
                accuracy: if win_rows == 0 { f64::NAN } else { win_hit as f64 / win_rows as f64 },
            });
            (win_loss, win_hit, win_rows, win_n) = (0.0, 0, 0, 0);
        }
    }
    Ok(curve)
}
