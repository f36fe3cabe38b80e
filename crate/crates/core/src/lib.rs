//! Online multi-target tracking with learned recurrent motion and
//! data-association models, Kalman-filter baselines and CLEAR MOT evaluation.

pub mod assignment;
pub mod association;
pub mod baselines;
pub mod config;
pub mod datagen;
pub mod error;
pub mod gradsuite;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{Detection, MeasurementFrame, Source, TargetState, TrackRow, TrackTable, STATE_DIM};
