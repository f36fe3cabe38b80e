//! Run configuration as flat `key = value` text.
//!
//! Every tunable has a dotted key. Lines starting with `#` are comments.
//! Unknown keys, duplicate keys and malformed values are rejected with the
//! offending line number.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::association::{AssocNetConfig, AssocTrainConfig, HardAssignMode, LabelSource};
use crate::baselines::{HeuristicConfig, KalmanParams};
use crate::datagen::{SceneConfig, TrajectoryModel};
use crate::error::{Error, Result};
use crate::motion::{MotionNetConfig, MotionTrainConfig};
use crate::nn::LrSchedule;
use crate::tracker::{AssocMode, TrackerConfig};

impl FromStr for AssocMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hungarian" => Ok(AssocMode::Hungarian),
            "lstm" => Ok(AssocMode::Lstm),
            _ => Err(Error::Config(format!("unknown association mode {s:?} (hungarian|lstm)"))),
        }
    }
}

impl fmt::Display for AssocMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssocMode::Hungarian => "hungarian",
            AssocMode::Lstm => "lstm",
        })
    }
}

impl FromStr for HardAssignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(HardAssignMode::Argmax),
            "lap" => Ok(HardAssignMode::Lap),
            _ => Err(Error::Config(format!("unknown hard assignment mode {s:?} (argmax|lap)"))),
        }
    }
}

impl fmt::Display for HardAssignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HardAssignMode::Argmax => "argmax",
            HardAssignMode::Lap => "lap",
        })
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(LabelSource::Oracle),
            "provenance" => Ok(LabelSource::Provenance),
            _ => Err(Error::Config(format!("unknown label source {s:?} (oracle|provenance)"))),
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Oracle => "oracle",
            LabelSource::Provenance => "provenance",
        })
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub image_width: f64,
    pub image_height: f64,
    pub iou_threshold: f64,
    pub model: TrajectoryModel,
    pub scene: SceneConfig,
    pub motion: MotionNetConfig,
    pub motion_train: MotionTrainConfig,
    pub assoc: AssocNetConfig,
    pub assoc_train: AssocTrainConfig,
    pub tracker: TrackerConfig,
    pub kalman: KalmanParams,
    pub heuristic: HeuristicConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 1920.0,
            image_height: 1080.0,
            iou_threshold: 0.5,
            model: TrajectoryModel::default(),
            scene: SceneConfig::default(),
            motion: MotionNetConfig::default(),
            motion_train: MotionTrainConfig::default(),
            assoc: AssocNetConfig::default(),
            assoc_train: AssocTrainConfig::default(),
            tracker: TrackerConfig::default(),
            kalman: KalmanParams::default(),
            heuristic: HeuristicConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

macro_rules! config_keys {
    ($($key:literal => |$c:ident| $place:expr;)*) => {
        impl RunConfig {
            /// All keys in file order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its text value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        let $c = &mut *self;
                        $place = parse_value(key, value)?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }

            /// `(key, value)` pairs for every tunable.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $({
                    let $c = self;
                    out.push(($key, $place.to_string()));
                })*
                out
            }
        }
    };
}

config_keys! {
    "seed" => |c| c.seed;
    "image.width" => |c| c.image_width;
    "image.height" => |c| c.image_height;
    "eval.iou_threshold" => |c| c.iou_threshold;

    "datagen.start_mean.x" => |c| c.model.start_mean[0];
    "datagen.start_mean.y" => |c| c.model.start_mean[1];
    "datagen.start_mean.w" => |c| c.model.start_mean[2];
    "datagen.start_mean.h" => |c| c.model.start_mean[3];
    "datagen.start_var.x" => |c| c.model.start_var[0];
    "datagen.start_var.y" => |c| c.model.start_var[1];
    "datagen.start_var.w" => |c| c.model.start_var[2];
    "datagen.start_var.h" => |c| c.model.start_var[3];
    "datagen.vel_mean.x" => |c| c.model.vel_mean[0];
    "datagen.vel_mean.y" => |c| c.model.vel_mean[1];
    "datagen.vel_mean.w" => |c| c.model.vel_mean[2];
    "datagen.vel_mean.h" => |c| c.model.vel_mean[3];
    "datagen.vel_var.x" => |c| c.model.vel_var[0];
    "datagen.vel_var.y" => |c| c.model.vel_var[1];
    "datagen.vel_var.w" => |c| c.model.vel_var[2];
    "datagen.vel_var.h" => |c| c.model.vel_var[3];
    "datagen.seq_length" => |c| c.scene.seq_length;
    "datagen.min_targets" => |c| c.scene.min_targets;
    "datagen.max_targets" => |c| c.scene.max_targets;
    "datagen.max_detections" => |c| c.scene.max_detections;
    "datagen.detection_prob" => |c| c.scene.detection_prob;
    "datagen.clutter_rate" => |c| c.scene.clutter_rate;
    "datagen.detection_noise" => |c| c.scene.detection_noise;
    "datagen.min_lifetime" => |c| c.scene.min_lifetime;

    "motion.hidden_size" => |c| c.motion.hidden_size;
    "motion.update_hidden" => |c| c.motion.update_hidden;
    "motion.iterations" => |c| c.motion_train.iterations;
    "motion.batch_size" => |c| c.motion_train.batch_size;
    "motion.lr" => |c| c.motion_train.schedule.base;
    "motion.lr_factor" => |c| c.motion_train.schedule.factor;
    "motion.lr_every" => |c| c.motion_train.schedule.every;
    "motion.lambda" => |c| c.motion_train.weights.lambda;
    "motion.kappa" => |c| c.motion_train.weights.kappa;
    "motion.nu" => |c| c.motion_train.weights.nu;
    "motion.xi" => |c| c.motion_train.weights.xi;
    "motion.init_existence" => |c| c.motion_train.episodes.init_existence;
    "motion.max_after_death" => |c| c.motion_train.episodes.max_after_death;
    "motion.clutter_ratio" => |c| c.motion_train.episodes.clutter_ratio;
    "motion.clutter_length" => |c| c.motion_train.episodes.clutter_length;
    "motion.log_every" => |c| c.motion_train.log_every;

    "assoc.n_max" => |c| c.assoc.n_max;
    "assoc.m_max" => |c| c.assoc.m_max;
    "assoc.embed_size" => |c| c.assoc.embed_size;
    "assoc.hidden_size" => |c| c.assoc.hidden_size;
    "assoc.layers" => |c| c.assoc.layers;
    "assoc.row_feature" => |c| c.assoc.row_feature;
    "assoc.iterations" => |c| c.assoc_train.iterations;
    "assoc.batch_size" => |c| c.assoc_train.batch_size;
    "assoc.lr" => |c| c.assoc_train.schedule.base;
    "assoc.lr_factor" => |c| c.assoc_train.schedule.factor;
    "assoc.lr_every" => |c| c.assoc_train.schedule.every;
    "assoc.prediction_noise" => |c| c.assoc_train.instances.prediction_noise;
    "assoc.candidate_prob" => |c| c.assoc_train.instances.candidate_prob;
    "assoc.miss_cost" => |c| c.assoc_train.instances.miss_cost;
    "assoc.labels" => |c| c.assoc_train.instances.labels;
    "assoc.log_every" => |c| c.assoc_train.log_every;

    "tracker.existence_threshold" => |c| c.tracker.existence_threshold;
    "tracker.assoc_mode" => |c| c.tracker.assoc_mode;
    "tracker.max_targets" => |c| c.tracker.max_targets;
    "tracker.init_existence" => |c| c.tracker.init_existence;
    "tracker.miss_cost" => |c| c.tracker.miss_cost;
    "tracker.confirm_window" => |c| c.tracker.confirm_window;
    "tracker.hard_mode" => |c| c.tracker.hard_mode;

    "kalman.process_noise" => |c| c.kalman.process_noise;
    "kalman.meas_noise" => |c| c.kalman.meas_noise;
    "heuristic.min_track_length" => |c| c.heuristic.min_track_length;
    "heuristic.max_misses" => |c| c.heuristic.max_misses;
    "heuristic.gate_distance" => |c| c.heuristic.gate_distance;
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn schedule_ok(name: &str, s: &LrSchedule) -> Result<()> {
    if !(s.base.is_finite() && s.base > 0.0 && s.factor.is_finite() && s.factor > 0.0 && s.every > 0) {
        return Err(Error::Config(format!("{name} schedule needs lr > 0, factor > 0, every > 0")));
    }
    Ok(())
}

impl RunConfig {
    /// Reduced sizes and a faster schedule that train in minutes on one core.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.motion = MotionNetConfig {
            hidden_size: 64,
            update_hidden: 32,
        };
        c.motion_train.iterations = 20_000;
        c.motion_train.schedule = LrSchedule {
            base: 2e-3,
            factor: 0.7,
            every: 2_000,
        };
        c.motion_train.weights.lambda = 100.0;
        c.motion_train.weights.kappa = 100.0;
        c.assoc = AssocNetConfig {
            n_max: 8,
            m_max: 10,
            embed_size: 64,
            hidden_size: 64,
            layers: 2,
            row_feature: true,
        };
        c.assoc_train.iterations = 10_000;
        c.assoc_train.schedule = LrSchedule {
            base: 2e-3,
            factor: 0.7,
            every: 2_000,
        };
        c.tracker.max_targets = 8;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config("eval.iou_threshold must lie in (0, 1]".into()));
        }
        self.model.validate().map_err(wrap)?;
        self.scene.validate().map_err(wrap)?;
        positive("motion.hidden_size", self.motion.hidden_size)?;
        positive("motion.update_hidden", self.motion.update_hidden)?;
        positive("motion.batch_size", self.motion_train.batch_size)?;
        schedule_ok("motion", &self.motion_train.schedule)?;
        self.motion_train.weights.validate().map_err(wrap)?;
        positive("assoc.n_max", self.assoc.n_max)?;
        positive("assoc.m_max", self.assoc.m_max)?;
        positive("assoc.embed_size", self.assoc.embed_size)?;
        positive("assoc.hidden_size", self.assoc.hidden_size)?;
        positive("assoc.layers", self.assoc.layers)?;
        positive("assoc.batch_size", self.assoc_train.batch_size)?;
        schedule_ok("assoc", &self.assoc_train.schedule)?;
        self.tracker.validate().map_err(wrap)?;
        if !(self.kalman.process_noise >= 0.0 && self.kalman.meas_noise >= 0.0) {
            return Err(Error::Config("kalman noise levels must be >= 0".into()));
        }
        if !(self.heuristic.gate_distance > 0.0) {
            return Err(Error::Config("heuristic.gate_distance must be positive".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self` and validates the result.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", k + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key {key:?}")));
            }
            self.set(key, value).map_err(|e| at(e.to_string().trim_start_matches("config: ").into()))?;
        }
        self.validate()
    }

    /// Defaults overridden by `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
