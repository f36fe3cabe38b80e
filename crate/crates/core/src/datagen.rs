//! Synthetic scene generation from a Gaussian trajectory model.
//!
//! Each track starts at a normally distributed box, moves with a constant
//! normally distributed velocity, and lives on a random `[birth, death]`
//! window. Every live box is detected with probability `detection_prob` and
//! perturbed by isotropic Gaussian noise; Poisson clutter is scattered
//! uniformly over the image. Detections are shuffled into `max_detections`
//! slots.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::nn::{seeded_rng, Rng as ChaRng};
use crate::types::{Detection, MeasurementFrame, Source, TargetState, TrackTable, STATE_DIM};

/// Boxes are never narrower or shorter than this (normalized units).
pub const MIN_EXTENT: f64 = 0.005;

/// Mean and variance of the start box and of the per-frame velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    pub start_mean: [f64; STATE_DIM],
    pub start_var: [f64; STATE_DIM],
    pub vel_mean: [f64; STATE_DIM],
    pub vel_var: [f64; STATE_DIM],
}

impl Default for TrajectoryModel {
    /// Pedestrian-like boxes: mostly horizontal motion, slowly varying size.
    fn default() -> Self {
        Self {
            start_mean: [-0.05, -0.2, 0.06, 0.18],
            start_var: [0.2f64.powi(2), 0.08f64.powi(2), 0.015f64.powi(2), 0.04f64.powi(2)],
            vel_mean: [0.0; STATE_DIM],
            vel_var: [0.012f64.powi(2), 0.004f64.powi(2), 0.0004f64.powi(2), 0.001f64.powi(2)],
        }
    }
}

impl TrajectoryModel {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .start_mean
            .iter()
            .chain(&self.start_var)
            .chain(&self.vel_mean)
            .chain(&self.vel_var);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory model has non-finite parameters"));
        }
        if self.start_var.iter().chain(&self.vel_var).any(|v| *v < 0.0) {
            return Err(Error::invalid("trajectory model variances must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Number of frames `T`.
    pub seq_length: u32,
    pub min_targets: usize,
    /// Upper bound `N` on the number of tracks in a scene.
    pub max_targets: usize,
    /// Slot count `M` of every generated frame.
    pub max_detections: usize,
    pub detection_prob: f64,
    /// Expected false alarms per frame.
    pub clutter_rate: f64,
    /// Standard deviation of the detection noise on every component.
    pub detection_noise: f64,
    /// Minimum `death − birth`; births are uniform on `[1, T − min_lifetime]`
    /// and deaths uniform on `[birth + min_lifetime, T]`.
    pub min_lifetime: u32,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seq_length: 20,
            min_targets: 1,
            max_targets: 4,
            max_detections: 10,
            detection_prob: 0.9,
            clutter_rate: 1.0,
            detection_noise: 0.01,
            min_lifetime: 5,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_length == 0 {
            return Err(Error::invalid("seq_length must be positive"));
        }
        if self.min_targets > self.max_targets {
            return Err(Error::invalid("min_targets exceeds max_targets"));
        }
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return Err(Error::invalid("detection_prob must lie in [0, 1]"));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(Error::invalid("clutter_rate must be finite and >= 0"));
        }
        if !(self.detection_noise >= 0.0 && self.detection_noise.is_finite()) {
            return Err(Error::invalid("detection_noise must be finite and >= 0"));
        }
        if self.min_lifetime >= self.seq_length {
            return Err(Error::invalid("min_lifetime must be shorter than seq_length"));
        }
        Ok(())
    }
}

/// One ground-truth trajectory, alive on frames `birth..=death`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTrack {
    pub id: u64,
    pub birth: u32,
    pub death: u32,
    /// `states[k]` is the box at frame `birth + k`.
    pub states: Vec<TargetState>,
}

impl GtTrack {
    pub fn alive_at(&self, frame: u32) -> bool {
        (self.birth..=self.death).contains(&frame)
    }

    pub fn state_at(&self, frame: u32) -> Option<TargetState> {
        self.alive_at(frame).then(|| self.states[(frame - self.birth) as usize])
    }

    /// Ground-truth existence (a box function over the lifetime).
    pub fn existence_at(&self, frame: u32) -> f64 {
        if self.alive_at(frame) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub gt_tracks: Vec<GtTrack>,
    /// `frames[t - 1]` holds frame `t`; detections carry their provenance.
    pub frames: Vec<MeasurementFrame>,
}

impl SceneSequence {
    pub fn seq_length(&self) -> u32 {
        self.frames.len() as u32
    }

    pub fn frame(&self, t: u32) -> &MeasurementFrame {
        &self.frames[(t - 1) as usize]
    }

    pub fn track(&self, id: u64) -> Option<&GtTrack> {
        self.gt_tracks.iter().find(|t| t.id == id)
    }

    pub fn gt_table(&self) -> TrackTable {
        let mut table = TrackTable::new();
        for t in 1..=self.seq_length() {
            for track in &self.gt_tracks {
                if let Some(s) = track.state_at(t) {
                    table.push(t, track.id, s);
                }
            }
        }
        table
    }

    /// Frame numbers at which track `id` was detected.
    pub fn detection_frames(&self, id: u64) -> Vec<u32> {
        self.frames
            .iter()
            .filter(|f| f.detections().any(|d| d.source == Source::Track(id)))
            .map(|f| f.frame)
            .collect()
    }
}

/// Per-sequence seed derived from a master seed with SplitMix64.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.max(0.0).sqrt()).expect("validated variance")
}

fn clamp_extent(mut s: TargetState) -> TargetState {
    s.w = s.w.max(MIN_EXTENT);
    s.h = s.h.max(MIN_EXTENT);
    s
}

/// Samples one scene; fully determined by `(model, cfg)` including `cfg.seed`.
pub fn sample_sequence(model: &TrajectoryModel, cfg: &SceneConfig) -> Result<SceneSequence> {
    let mut rng = seeded_rng(cfg.seed);
    sample_sequence_with_rng(model, cfg, &mut rng)
}

pub fn sample_sequence_with_rng(model: &TrajectoryModel, cfg: &SceneConfig, rng: &mut ChaRng) -> Result<SceneSequence> {
    model.validate()?;
    cfg.validate()?;
    let t_max = cfg.seq_length;
    let n = rng.random_range(cfg.min_targets..=cfg.max_targets);
    let mut tracks = Vec::with_capacity(n);
    for k in 0..n {
        let birth = rng.random_range(1..=t_max - cfg.min_lifetime);
        let death = rng.random_range(birth + cfg.min_lifetime..=t_max);
        tracks.push(sample_track(model, k as u64 + 1, birth, death, rng));
    }
    observe(tracks, model, cfg, rng)
}

/// Scene with `n` tracks alive on every frame (throughput benchmarks).
pub fn sample_persistent(model: &TrajectoryModel, cfg: &SceneConfig, n: usize) -> Result<SceneSequence> {
    model.validate()?;
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let tracks = (0..n)
        .map(|k| sample_track(model, k as u64 + 1, 1, cfg.seq_length, &mut rng))
        .collect();
    observe(tracks, model, cfg, &mut rng)
}

fn sample_track(model: &TrajectoryModel, id: u64, birth: u32, death: u32, rng: &mut ChaRng) -> GtTrack {
    let mut start = [0.0; STATE_DIM];
    let mut vel = [0.0; STATE_DIM];
    for d in 0..STATE_DIM {
        start[d] = normal(model.start_mean[d], model.start_var[d]).sample(rng);
    }
    for d in 0..STATE_DIM {
        vel[d] = normal(model.vel_mean[d], model.vel_var[d]).sample(rng);
    }
    let states = (0..=(death - birth))
        .map(|k| {
            let s: Vec<f64> = (0..STATE_DIM).map(|d| start[d] + k as f64 * vel[d]).collect();
            clamp_extent(TargetState::from_slice(&s))
        })
        .collect();
    GtTrack {
        id,
        birth,
        death,
        states,
    }
}

fn observe(tracks: Vec<GtTrack>, model: &TrajectoryModel, cfg: &SceneConfig, rng: &mut ChaRng) -> Result<SceneSequence> {
    let noise = normal(0.0, cfg.detection_noise * cfg.detection_noise);
    let clutter = if cfg.clutter_rate > 0.0 {
        Some(Poisson::new(cfg.clutter_rate).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let w_dist = normal(model.start_mean[2], model.start_var[2]);
    let h_dist = normal(model.start_mean[3], model.start_var[3]);
    let mut frames = Vec::with_capacity(cfg.seq_length as usize);
    for t in 1..=cfg.seq_length {
        let mut dets = Vec::new();
        for track in &tracks {
            let Some(s) = track.state_at(t) else { continue };
            let detected = rng.random_bool(cfg.detection_prob);
            let mut z = s.to_array();
            for v in z.iter_mut() {
                *v += noise.sample(rng);
            }
            if detected {
                dets.push(Detection {
                    state: clamp_extent(TargetState::from_slice(&z)),
                    confidence: 1.0,
                    source: Source::Track(track.id),
                });
            }
        }
        let n_clutter = clutter.map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..n_clutter {
            let s = TargetState::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                w_dist.sample(rng),
                h_dist.sample(rng),
            );
            dets.push(Detection {
                state: clamp_extent(s),
                confidence: 1.0,
                source: Source::Clutter,
            });
        }
        dets.shuffle(rng);
        frames.push(MeasurementFrame::with_capacity(t, dets, cfg.max_detections));
    }
    Ok(SceneSequence {
        gt_tracks: tracks,
        frames,
    })
}

fn mean_var(samples: &[[f64; STATE_DIM]]) -> ([f64; STATE_DIM], [f64; STATE_DIM]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; STATE_DIM];
    let mut var = [0.0; STATE_DIM];
    for d in 0..STATE_DIM {
        mean[d] = samples.iter().map(|s| s[d]).sum::<f64>() / n;
        var[d] = samples.iter().map(|s| (s[d] - mean[d]).powi(2)).sum::<f64>() / (n - 1.0);
    }
    (mean, var)
}

/// Sample mean and (unbiased) variance of start boxes and average velocities.
///
/// Each track is a frame-ordered list of boxes. Single-frame tracks
/// contribute a start box but no velocity.
pub fn fit_model(tracks: &[Vec<TargetState>]) -> Result<TrajectoryModel> {
    let tracks: Vec<&Vec<TargetState>> = tracks.iter().filter(|t| !t.is_empty()).collect();
    if tracks.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 tracks, got {}",
            tracks.len()
        )));
    }
    let starts: Vec<[f64; STATE_DIM]> = tracks.iter().map(|t| t[0].to_array()).collect();
    let vels: Vec<[f64; STATE_DIM]> = tracks
        .iter()
        .filter(|t| t.len() >= 2)
        .map(|t| {
            let (a, b) = (t[0].to_array(), t[t.len() - 1].to_array());
            let k = (t.len() - 1) as f64;
            [(b[0] - a[0]) / k, (b[1] - a[1]) / k, (b[2] - a[2]) / k, (b[3] - a[3]) / k]
        })
        .collect();
    if vels.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 tracks spanning two or more frames".into(),
        ));
    }
    let (start_mean, start_var) = mean_var(&starts);
    let (vel_mean, vel_var) = mean_var(&vels);
    Ok(TrajectoryModel {
        start_mean,
        start_var,
        vel_mean,
        vel_var,
    })
}

/// Fits a model to every trajectory of a ground-truth table.
pub fn fit_model_from_table(table: &TrackTable) -> Result<TrajectoryModel> {
    let tracks: Vec<Vec<TargetState>> = table
        .by_id()
        .into_values()
        .map(|t| t.into_iter().map(|(_, s)| s).collect())
        .collect();
    fit_model(&tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tracks_have_zero_variance() {
        let t = vec![TargetState::new(0.1, 0.2, 0.3, 0.4), TargetState::new(0.2, 0.2, 0.3, 0.5)];
        let m = fit_model(&[t.clone(), t]).unwrap();
        assert_eq!(m.start_mean, [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(m.start_var, [0.0; 4]);
        assert!((m.vel_mean[0] - 0.1).abs() < 1e-15);
        assert!((m.vel_mean[3] - 0.1).abs() < 1e-15);
        assert_eq!(m.vel_var, [0.0; 4]);
    }

    #[test]
    fn two_starts_mean_and_sample_variance() {
        let a = vec![TargetState::new(0.0, 0.0, 0.1, 0.1), TargetState::new(0.0, 0.0, 0.1, 0.1)];
        let b = vec![TargetState::new(1.0, 0.0, 0.1, 0.1), TargetState::new(1.0, 0.0, 0.1, 0.1)];
        let m = fit_model(&[a, b]).unwrap();
        assert_eq!(m.start_mean[0], 0.5);
        assert_eq!(m.start_var[0], 0.5);
    }

    #[test]
    fn too_few_tracks() {
        let a = vec![TargetState::default()];
        assert!(matches!(fit_model(&[a]), Err(Error::InsufficientData(_))));
        assert!(fit_model(&[]).is_err());
    }

    #[test]
    fn noiseless_full_detection_reproduces_ground_truth() {
        let cfg = SceneConfig {
            detection_prob: 1.0,
            detection_noise: 0.0,
            clutter_rate: 0.0,
            seed: 3,
            ..Default::default()
        };
        let scene = sample_sequence(&TrajectoryModel::default(), &cfg).unwrap();
        for frame in &scene.frames {
            let live = scene.gt_tracks.iter().filter(|t| t.alive_at(frame.frame)).count();
            assert_eq!(frame.len(), live);
            for d in frame.detections() {
                let Source::Track(id) = d.source else { panic!("unexpected clutter") };
                assert_eq!(Some(d.state), scene.track(id).unwrap().state_at(frame.frame));
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig { seed: 99, ..Default::default() };
        let m = TrajectoryModel::default();
        assert_eq!(sample_sequence(&m, &cfg).unwrap(), sample_sequence(&m, &cfg).unwrap());
        let other = SceneConfig { seed: 100, ..Default::default() };
        assert_ne!(sample_sequence(&m, &cfg).unwrap(), sample_sequence(&m, &other).unwrap());
    }

    #[test]
    fn lifetimes_respect_bounds() {
        let m = TrajectoryModel::default();
        for seed in 0..50 {
            let cfg = SceneConfig { seed, ..Default::default() };
            let s = sample_sequence(&m, &cfg).unwrap();
            assert!((1..=4).contains(&s.gt_tracks.len()));
            for t in &s.gt_tracks {
                assert!(t.birth >= 1 && t.birth <= 15);
                assert!(t.death >= t.birth + 5 && t.death <= 20);
                assert_eq!(t.states.len() as u32, t.death - t.birth + 1);
            }
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
