//! Finite-difference checks of every trainable graph on random small instances.

use rand::Rng;

use crate::assignment::CostMatrix;
use crate::association::{AssocInstance, AssocNet, AssocNetConfig};
use crate::error::Result;
use crate::motion::{Episode, EpisodeStep, LossWeights, MotionNet, MotionNetConfig};
use crate::nn::{check_gradients, seeded_rng, GradCheckReport, Parameterized, SeqStep, SequenceRegressor, FD_STEP};
use crate::types::{Detection, MeasurementFrame, TargetState};

/// Tolerance on the relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Result for one graph family.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub instances: usize,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passes(&self) -> bool {
        self.report.passes(GRADCHECK_TOLERANCE)
    }
}

fn random_state<R: Rng + ?Sized>(rng: &mut R) -> TargetState {
    TargetState::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.02..0.2),
        rng.random_range(0.05..0.4),
    )
}

/// A random training episode over frames with up to `m` detection slots.
/// Rows are strictly positive, so every term of the loss is active.
pub fn random_episode<R: Rng + ?Sized>(rng: &mut R, len: usize, m: usize) -> Episode {
    let steps = (0..len)
        .map(|t| {
            let dets: Vec<_> = (0..rng.random_range(0..=m))
                .map(|_| Detection::new(random_state(rng)))
                .collect();
            let frame = MeasurementFrame::with_capacity(t as u32 + 1, dets, m);
            let raw: Vec<f64> = (0..=m).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let alive = rng.random_bool(0.7);
            EpisodeStep {
                a_row: raw.iter().map(|v| v / sum).collect(),
                frame,
                gt: alive.then(|| random_state(rng)),
                gt_existence: if alive { 1.0 } else { 0.0 },
            }
        })
        .collect();
    Episode {
        start: random_state(rng),
        init_existence: 0.5,
        steps,
    }
}

fn scale_weights<M: Parameterized>(model: &mut M, k: f64) {
    for p in model.params_mut() {
        p.value.scale(k);
    }
}

fn random_sequence<R: Rng + ?Sized>(rng: &mut R, len: usize, input: usize, output: usize) -> Vec<SeqStep> {
    (0..len)
        .map(|_| SeqStep {
            input: (0..input).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: (0..output).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect()
}

fn check_regressor<R: Rng + ?Sized>(net: &mut SequenceRegressor, rng: &mut R) -> Result<GradCheckReport> {
    scale_weights(net, 4.0);
    let len = rng.random_range(1..=6);
    let seq = random_sequence(rng, len, 3, 2);
    check_gradients(
        net,
        FD_STEP,
        None,
        rng,
        |n| n.loss(&seq),
        |n| n.bptt_gradients(&seq),
    )
}

/// Checks `instances` random cases each of the RNN stack, the LSTM stack,
/// the motion loss with all four terms and the association loss.
pub fn run_gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();

    let mut rnn = GradCheckReport::default();
    for _ in 0..instances {
        let layers = rng.random_range(1..=2);
        let mut net = SequenceRegressor::rnn(3, 4, layers, 2, &mut rng);
        rnn.merge(check_regressor(&mut net, &mut rng)?);
    }
    out.push(SuiteEntry {
        name: "rnn",
        instances,
        report: rnn,
    });

    let mut lstm = GradCheckReport::default();
    for _ in 0..instances {
        let layers = rng.random_range(1..=2);
        let mut net = SequenceRegressor::lstm(3, 4, layers, 2, &mut rng);
        lstm.merge(check_regressor(&mut net, &mut rng)?);
    }
    out.push(SuiteEntry {
        name: "lstm",
        instances,
        report: lstm,
    });

    let mut motion = GradCheckReport::default();
    for _ in 0..instances {
        let cfg = MotionNetConfig {
            hidden_size: rng.random_range(3..=6),
            update_hidden: rng.random_range(2..=5),
        };
        let mut net = MotionNet::new(cfg, &mut rng);
        scale_weights(&mut net, 3.0);
        let w = LossWeights {
            lambda: rng.random_range(0.1..2.0),
            kappa: rng.random_range(0.1..2.0),
            nu: rng.random_range(0.1..2.0),
            xi: rng.random_range(0.1..2.0),
        };
        let len = rng.random_range(1..=5);
        let ep = random_episode(&mut rng, len, 3);
        motion.merge(check_gradients(
            &mut net,
            FD_STEP,
            None,
            &mut rng,
            |n| n.episode_loss(&ep, &w),
            |n| n.accumulate_gradients(&ep, &w, 1.0).map(|t| t.total(&w)),
        )?);
    }
    out.push(SuiteEntry {
        name: "motion_loss",
        instances,
        report: motion,
    });

    let mut assoc = GradCheckReport::default();
    for _ in 0..instances {
        let cfg = AssocNetConfig {
            n_max: 3,
            m_max: 4,
            embed_size: 5,
            hidden_size: 4,
            layers: rng.random_range(1..=2),
            row_feature: rng.random_bool(0.5),
        };
        let mut net = AssocNet::new(cfg, &mut rng)?;
        scale_weights(&mut net, 8.0);
        let n = rng.random_range(1..=cfg.n_max);
        let m = rng.random_range(1..=cfg.m_max);
        let cost = CostMatrix::new(n, m, (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect())?;
        let inst = AssocInstance {
            labels: (0..n).map(|_| rng.random_range(0..=m)).collect(),
            own: vec![None; n],
            cost,
        };
        assoc.merge(check_gradients(
            &mut net,
            FD_STEP,
            None,
            &mut rng,
            |n| n.instance_loss(&inst),
            |n| n.accumulate_gradients(&inst, 1.0),
        )?);
    }
    out.push(SuiteEntry {
        name: "da_loss",
        instances,
        report: assoc,
    });
    Ok(out)
}
