use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rnntrack::association::{train_assoc, AssocNet, AssocNetConfig};
use rnntrack::baselines::{run_kalman_ha, run_kalman_ha2};
use rnntrack::config::RunConfig;
use rnntrack::datagen::{derive_seed, sample_persistent, sample_sequence, SceneConfig};
use rnntrack::gradsuite::{run_gradcheck_suite, GRADCHECK_TOLERANCE};
use rnntrack::io::{
    parse_mot_csv, rows_to_frames, rows_to_table, table_to_rows, write_csv, write_existence_csv, write_mot_csv,
    write_scene, ImageSize,
};
use rnntrack::metrics::{evaluate, EvalResult};
use rnntrack::motion::{train_motion, MotionNet};
use rnntrack::nn::{seeded_rng, Checkpoint};
use rnntrack::tracker::{run_sequence, AssocMode, Nets};

use crate::{Command, ConfigArgs, Method, Mode, Preset};

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut c = match args.preset {
        Preset::Paper => RunConfig::default(),
        Preset::Desk => RunConfig::desk(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        c.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(seed) = args.seed {
        c.seed = seed;
    }
    c.validate()?;
    Ok(c)
}

fn image(c: &RunConfig) -> Result<ImageSize> {
    Ok(ImageSize::new(c.image_width, c.image_height)?)
}

fn load_motion(path: &Path) -> Result<MotionNet> {
    let cp = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(MotionNet::from_checkpoint(&cp)?)
}

fn load_assoc(path: &Path) -> Result<AssocNet> {
    let cp = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(AssocNet::from_checkpoint(&cp)?)
}

fn mode_of(m: Mode) -> AssocMode {
    match m {
        Mode::Hungarian => AssocMode::Hungarian,
        Mode::Lstm => AssocMode::Lstm,
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { cfg, out, scenes } => gen_data(&load_config(&cfg)?, &out, scenes),
        Command::TrainMotion {
            cfg,
            out,
            iterations,
            curve,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(n) = iterations {
                c.motion_train.iterations = n;
            }
            let mut net = MotionNet::new(c.motion, &mut seeded_rng(derive_seed(c.seed, 0)));
            let points = train_motion(&mut net, &c.model, &c.scene, &c.motion_train, derive_seed(c.seed, 1))?;
            net.to_checkpoint(c.motion_train.iterations).save(&out)?;
            if let Some(path) = curve {
                let rows: Vec<Vec<String>> = points
                    .iter()
                    .map(|p| {
                        vec![
                            p.iteration.to_string(),
                            p.loss.to_string(),
                            p.terms.prediction.to_string(),
                            p.terms.update.to_string(),
                            p.terms.existence.to_string(),
                            p.terms.smoothness.to_string(),
                        ]
                    })
                    .collect();
                write_csv(
                    &path,
                    &["iteration", "loss", "prediction", "update", "existence", "smoothness"],
                    &rows,
                )?;
            }
            if let Some(p) = points.last() {
                println!("iteration {} loss {:.6}", p.iteration, p.loss);
            }
            Ok(())
        }
        Command::TrainAssoc {
            cfg,
            out,
            iterations,
            curve,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(n) = iterations {
                c.assoc_train.iterations = n;
            }
            let mut net = AssocNet::new(c.assoc, &mut seeded_rng(derive_seed(c.seed, 0)))?;
            let scene = SceneConfig {
                max_targets: c.scene.max_targets.min(c.assoc.n_max),
                max_detections: c.scene.max_detections.min(c.assoc.m_max),
                ..c.scene
            };
            let points = train_assoc(&mut net, &c.model, &scene, &c.assoc_train, derive_seed(c.seed, 1))?;
            net.to_checkpoint(c.assoc_train.iterations).save(&out)?;
            if let Some(path) = curve {
                let rows: Vec<Vec<String>> = points
                    .iter()
                    .map(|p| vec![p.iteration.to_string(), p.loss.to_string(), p.accuracy.to_string()])
                    .collect();
                write_csv(&path, &["iteration", "loss", "accuracy"], &rows)?;
            }
            if let Some(p) = points.last() {
                println!("iteration {} loss {:.6} accuracy {:.4}", p.iteration, p.loss, p.accuracy);
            }
            Ok(())
        }
        Command::Track {
            cfg,
            model,
            assoc,
            det,
            out,
            mode,
            existence,
        } => {
            let c = load_config(&cfg)?;
            let mut tc = c.tracker;
            if let Some(m) = mode {
                tc.assoc_mode = mode_of(m);
            }
            let motion = load_motion(&model)?;
            let assoc = assoc.as_deref().map(load_assoc).transpose()?;
            if tc.assoc_mode == AssocMode::Lstm && assoc.is_none() {
                bail!("--mode lstm needs --assoc");
            }
            let im = image(&c)?;
            let frames = rows_to_frames(&parse_mot_csv(&det)?, im, None);
            let nets = Nets {
                motion: &motion,
                assoc: assoc.as_ref(),
            };
            let result = run_sequence(&frames, &nets, &tc)?;
            write_mot_csv(&out, &table_to_rows(&result.table, im))?;
            if let Some(path) = existence {
                write_existence_csv(&path, &result.existence)?;
            }
            println!(
                "{} frames, {} tracks, {:.1} frames/s",
                frames.len(),
                result.table.ids().len(),
                result.frames_per_second()
            );
            Ok(())
        }
        Command::Baseline { cfg, method, det, out } => {
            let c = load_config(&cfg)?;
            let im = image(&c)?;
            let frames = rows_to_frames(&parse_mot_csv(&det)?, im, None);
            let table = match method {
                Method::Ha => run_kalman_ha(&frames, &c.kalman, c.heuristic.gate_distance)?,
                Method::Ha2 => run_kalman_ha2(&frames, &c.kalman, &c.heuristic)?,
            };
            write_mot_csv(&out, &table_to_rows(&table, im))?;
            Ok(())
        }
        Command::Eval { cfg, gt, res, out } => {
            let c = load_config(&cfg)?;
            let im = image(&c)?;
            let gt = rows_to_table(&parse_mot_csv(&gt)?, im)?;
            let hyp = rows_to_table(&parse_mot_csv(&res)?, im)?;
            let r = evaluate(&gt, &hyp, c.iou_threshold)?;
            let text = format!("{}\n{}\n", EvalResult::CSV_HEADER, r.csv_row());
            print!("{text}");
            if let Some(path) = out {
                fs::write(&path, text)?;
            }
            Ok(())
        }
        Command::Gradcheck { instances, seed } => {
            let mut ok = true;
            for e in run_gradcheck_suite(instances, seed)? {
                println!(
                    "{:12} instances {:3} entries {:6} max rel error {:.3e} {}",
                    e.name,
                    e.instances,
                    e.report.checked,
                    e.report.max_rel_error,
                    if e.passes() { "ok" } else { "FAIL" }
                );
                ok &= e.passes();
            }
            if !ok {
                bail!("relative error above {GRADCHECK_TOLERANCE:e}");
            }
            Ok(())
        }
        Command::Bench {
            cfg,
            model,
            assoc,
            mode,
            targets,
            frames,
        } => {
            let c = load_config(&cfg)?;
            let report = bench(&c, model.as_deref(), assoc.as_deref(), mode_of(mode), targets, frames)?;
            println!(
                "{} frames, mean confirmed tracks {:.1}, {:.1} frames/s",
                report.frames, report.mean_live, report.fps
            );
            Ok(())
        }
    }
}

fn gen_data(c: &RunConfig, out: &Path, scenes: usize) -> Result<()> {
    let im = image(c)?;
    for k in 0..scenes {
        let scene_cfg = SceneConfig {
            seed: derive_seed(c.seed, k as u64),
            ..c.scene
        };
        let scene = sample_sequence(&c.model, &scene_cfg)?;
        write_scene(&out.join(format!("scene_{k:04}")), &scene, im)?;
    }
    println!("wrote {scenes} scenes to {}", out.display());
    Ok(())
}

pub struct BenchReport {
    pub frames: usize,
    pub mean_live: f64,
    pub fps: f64,
}

/// Runs the tracker on one scene with `targets` persistent targets.
pub fn bench(
    c: &RunConfig,
    model: Option<&Path>,
    assoc: Option<&Path>,
    mode: AssocMode,
    targets: usize,
    frames: u32,
) -> Result<BenchReport> {
    let scene_cfg = SceneConfig {
        seq_length: frames,
        min_targets: targets,
        max_targets: targets,
        max_detections: targets + 10,
        seed: c.seed,
        ..c.scene
    };
    let scene = sample_persistent(&c.model, &scene_cfg, targets)?;
    let motion = match model {
        Some(p) => load_motion(p)?,
        None => MotionNet::new(c.motion, &mut seeded_rng(c.seed)),
    };
    let mut tc = c.tracker;
    tc.assoc_mode = mode;
    tc.max_targets = tc.max_targets.max(targets + 5);
    let assoc = match (mode, assoc) {
        (AssocMode::Hungarian, _) => None,
        (AssocMode::Lstm, Some(p)) => Some(load_assoc(p)?),
        (AssocMode::Lstm, None) => Some(AssocNet::new(
            AssocNetConfig {
                n_max: tc.max_targets,
                m_max: scene_cfg.max_detections,
                ..c.assoc
            },
            &mut seeded_rng(c.seed),
        )?),
    };
    if let Some(a) = &assoc {
        tc.max_targets = tc.max_targets.min(a.config().n_max);
    }
    let nets = Nets {
        motion: &motion,
        assoc: assoc.as_ref(),
    };
    let result = run_sequence(&scene.frames, &nets, &tc)?;
    Ok(BenchReport {
        frames: scene.frames.len(),
        mean_live: result.existence.iter().filter(|r| r.confirmed).count() as f64 / scene.frames.len().max(1) as f64,
        fps: result.frames_per_second(),
    })
}
