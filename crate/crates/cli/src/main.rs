//! `rnntrack`: generate synthetic data, train the motion and association
//! networks, track, run the Kalman baselines, evaluate and benchmark.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rnntrack", version, about = "Online multi-target tracking with recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that reads a run configuration.
#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// `key = value` file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting point for all tunables.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Master seed; overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Published network sizes and schedule.
    Paper,
    /// Small networks and a fast schedule for a single CPU core.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Hungarian,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Kalman filter with Hungarian association, no track management.
    Ha,
    /// Kalman-HA plus coasting and short-track removal.
    Ha2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic scenes as MOT CSV files plus provenance sidecars.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; scenes go to `scene_NNNN/` below it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
    },
    /// Train the motion network and write a checkpoint.
    TrainMotion {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `motion.iterations`.
        #[arg(long)]
        iterations: Option<u64>,
        /// Loss curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Train the association network and write a checkpoint.
    TrainAssoc {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `assoc.iterations`.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Track a detection file with trained networks.
    Track {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Motion network checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Association network checkpoint (needed with `--mode lstm`).
        #[arg(long)]
        assoc: Option<PathBuf>,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `tracker.assoc_mode`.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Per-frame existence dump.
        #[arg(long)]
        existence: Option<PathBuf>,
    },
    /// Run a Kalman-filter baseline on a detection file.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Method::Ha)]
        method: Method,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// CLEAR MOT metrics of a result file against ground truth.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        /// Also write the summary CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every trainable graph.
    Gradcheck {
        /// Random instances per graph family.
        #[arg(long, default_value_t = 15)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Tracker throughput on a synthetic scene with persistent targets.
    Bench {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Motion network checkpoint; untrained weights of the preset size otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Association network checkpoint for `--mode lstm`.
        #[arg(long)]
        assoc: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Hungarian)]
        mode: Mode,
        #[arg(long, default_value_t = 20)]
        targets: usize,
        #[arg(long, default_value_t = 500)]
        frames: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
