//! Online multi-target tracker built from the learned motion and
//! association models.
//!
//! Each frame: predict every live track, build the distance matrix, associate
//! (Hungarian or LSTM), update states and existence, terminate, spawn
//! candidates at unassigned detections, enforce the track cap, and emit every
//! confirmed track. Nothing emitted is ever revised.

use std::time::{Duration, Instant};

use crate::assignment::solve_lap;
use crate::association::{build_cost_matrix, infer_hard_assignment, AssocNet, HardAssignMode};
use crate::error::{Error, Result};
use crate::motion::{FilterState, MotionNet};
use crate::types::{Detection, MeasurementFrame, TargetState, TrackTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocMode {
    /// Hungarian matching on distances, one-hot rows.
    Hungarian,
    /// Rows predicted by the association LSTM.
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub existence_threshold: f64,
    pub assoc_mode: AssocMode,
    pub max_targets: usize,
    /// Existence of a newborn candidate.
    pub init_existence: f64,
    /// Miss price for Hungarian association.
    pub miss_cost: f64,
    /// A candidate not confirmed after this many frames is dropped.
    pub confirm_window: u32,
    /// How LSTM rows are turned into hard decisions for spawning.
    pub hard_mode: HardAssignMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            existence_threshold: 0.6,
            assoc_mode: AssocMode::Hungarian,
            max_targets: 50,
            init_existence: 0.5,
            miss_cost: 0.1,
            confirm_window: 3,
            hard_mode: HardAssignMode::Argmax,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.existence_threshold > 0.0 && self.existence_threshold < 1.0) {
            return Err(Error::invalid("existence_threshold must lie in (0, 1)"));
        }
        if !(self.init_existence > 0.0 && self.init_existence < 1.0) {
            return Err(Error::invalid("init_existence must lie in (0, 1)"));
        }
        if self.max_targets == 0 {
            return Err(Error::invalid("max_targets must be positive"));
        }
        if !(self.miss_cost.is_finite() && self.miss_cost >= 0.0) {
            return Err(Error::invalid("miss_cost must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Trained models used by the tracker.
#[derive(Debug, Clone, Copy)]
pub struct Nets<'a> {
    pub motion: &'a MotionNet,
    pub assoc: Option<&'a AssocNet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveTrack {
    pub id: u64,
    pub filter: FilterState,
    pub confirmed: bool,
    /// Frames stepped since spawning.
    pub age: u32,
    pub history: Vec<(u32, TargetState)>,
}

impl LiveTrack {
    pub fn state(&self) -> TargetState {
        self.filter.state
    }

    pub fn existence(&self) -> f64 {
        self.filter.existence
    }
}

/// Existence of one track after a frame (for the optional dump).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistenceRecord {
    pub frame: u32,
    pub id: u64,
    pub existence: f64,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutput {
    /// `(id, box)` of every confirmed track after this frame.
    pub emitted: Vec<(u64, TargetState)>,
    pub existence: Vec<ExistenceRecord>,
}

/// Live tracks plus the id counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub tracks: Vec<LiveTrack>,
    next_id: u64,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 1,
        }
    }
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }
}

fn one_hot(len: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

/// Keeps at most `m_max` detections for the association net, preferring those
/// closest to a predicted box; the rest stay unassigned.
fn fit_columns(frame: &MeasurementFrame, predicted: &[TargetState], m_max: usize) -> MeasurementFrame {
    if frame.capacity() <= m_max {
        return frame.clone();
    }
    let mut dets: Vec<(f64, usize, Detection)> = frame
        .occupied()
        .map(|(j, d)| {
            let near = predicted.iter().map(|p| p.distance(&d.state)).fold(f64::INFINITY, f64::min);
            (near, j, *d)
        })
        .collect();
    dets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dets.truncate(m_max);
    dets.sort_by_key(|d| d.1);
    MeasurementFrame::with_capacity(frame.frame, dets.into_iter().map(|d| d.2).collect(), m_max)
}

/// Advances the tracker by one frame.
pub fn step_frame(
    state: &mut TrackerState,
    frame: &MeasurementFrame,
    nets: &Nets<'_>,
    cfg: &TrackerConfig,
) -> Result<FrameOutput> {
    cfg.validate()?;
    let preds = state
        .tracks
        .iter()
        .map(|t| nets.motion.begin_step(&t.filter))
        .collect::<Result<Vec<_>>>()?;
    let x_star: Vec<TargetState> = preds.iter().map(|p| p.x_star).collect();

    // Association: soft rows for the update, hard columns for spawning.
    let (assoc_frame, rows, taken) = match cfg.assoc_mode {
        AssocMode::Hungarian => {
            let c = build_cost_matrix(&x_star, frame)?;
            let m = frame.capacity();
            let a = solve_lap(&c, cfg.miss_cost)?;
            let rows: Vec<Vec<f64>> = a.rows.iter().map(|r| one_hot(m + 1, r.unwrap_or(m))).collect();
            let taken: Vec<usize> = a.rows.iter().flatten().copied().collect();
            (frame.clone(), rows, taken)
        }
        AssocMode::Lstm => {
            let net = nets
                .assoc
                .ok_or_else(|| Error::invalid("lstm association needs an association model"))?;
            let ac = net.config();
            if cfg.max_targets > ac.n_max {
                return Err(Error::invalid(format!(
                    "max_targets {} exceeds the association net capacity {}",
                    cfg.max_targets, ac.n_max
                )));
            }
            let f = fit_columns(frame, &x_star, ac.m_max);
            let c = build_cost_matrix(&x_star, &f)?;
            let a = net.forward(&c)?;
            let hard = infer_hard_assignment(&a, cfg.hard_mode)?;
            let taken: Vec<usize> = hard.rows.iter().flatten().copied().collect();
            (f, a.rows().to_vec(), taken)
        }
    };

    let mut survivors = Vec::with_capacity(state.tracks.len());
    for ((track, pred), row) in state.tracks.drain(..).zip(&preds).zip(&rows) {
        let out = nets.motion.finish_step(&track.filter, pred, &assoc_frame, row)?;
        let mut t = LiveTrack {
            filter: out.next,
            age: track.age + 1,
            ..track
        };
        let e = t.existence();
        if t.confirmed {
            if e < cfg.existence_threshold {
                continue;
            }
        } else if e >= cfg.existence_threshold {
            t.confirmed = true;
        } else if e < cfg.init_existence || t.age >= cfg.confirm_window {
            continue;
        }
        survivors.push(t);
    }

    let mut is_taken = vec![false; assoc_frame.capacity()];
    for j in taken {
        is_taken[j] = true;
    }
    let mut unassigned: Vec<TargetState> = assoc_frame
        .occupied()
        .filter(|(j, _)| !is_taken[*j])
        .map(|(_, d)| d.state)
        .collect();
    if assoc_frame.capacity() != frame.capacity() {
        // Detections left out of the association net's view.
        let seen: Vec<TargetState> = assoc_frame.detections().map(|d| d.state).collect();
        unassigned.extend(frame.detections().map(|d| d.state).filter(|s| !seen.contains(s)));
    }
    for z in unassigned {
        survivors.push(LiveTrack {
            id: state.next_id,
            filter: nets.motion.initial_state(z, cfg.init_existence),
            confirmed: false,
            age: 0,
            history: Vec::new(),
        });
        state.next_id += 1;
    }

    while survivors.len() > cfg.max_targets {
        // Lowest existence goes first; among equals the newest.
        let (k, _) = survivors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.existence().total_cmp(&b.1.existence()).then(b.1.id.cmp(&a.1.id)))
            .expect("non-empty");
        survivors.remove(k);
    }

    let mut out = FrameOutput::default();
    for t in &mut survivors {
        if t.confirmed {
            t.history.push((frame.frame, t.state()));
            out.emitted.push((t.id, t.state()));
        }
        out.existence.push(ExistenceRecord {
            frame: frame.frame,
            id: t.id,
            existence: t.existence(),
            confirmed: t.confirmed,
        });
    }
    state.tracks = survivors;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub table: TrackTable,
    pub existence: Vec<ExistenceRecord>,
    /// Wall-clock time spent in `step_frame` for each frame.
    pub frame_times: Vec<Duration>,
}

impl RunResult {
    pub fn frames_per_second(&self) -> f64 {
        let total: f64 = self.frame_times.iter().map(|d| d.as_secs_f64()).sum();
        if total == 0.0 {
            f64::INFINITY
        } else {
            self.frame_times.len() as f64 / total
        }
    }
}

/// Runs `step_frame` over a whole sequence.
pub fn run_sequence(frames: &[MeasurementFrame], nets: &Nets<'_>, cfg: &TrackerConfig) -> Result<RunResult> {
    let mut state = TrackerState::new();
    let mut result = RunResult::default();
    for frame in frames {
        let t0 = Instant::now();
        let out = step_frame(&mut state, frame, nets, cfg)?;
        result.frame_times.push(t0.elapsed());
        for (id, s) in out.emitted {
            result.table.push(frame.frame, id, s);
        }
        result.existence.extend(out.existence);
    }
    Ok(result)
}
