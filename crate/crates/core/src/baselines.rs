//! Kalman-filter trackers with Hungarian matching.
//!
//! Every box component follows an independent constant-velocity model, so a
//! track carries an 8-dimensional state `[x, y, w, h, vx, vy, vw, vh]`.
//! `run_kalman_ha` starts a track at every unassigned detection and ends it at
//! its first miss. `run_kalman_ha2` lets tracks coast through a few misses and
//! then removes short or trailing-coast output in a post-processing pass.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::assignment::{solve_lap, CostMatrix};
use crate::error::{Error, Result};
use crate::types::{MeasurementFrame, TargetState, TrackTable, STATE_DIM};

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type MeasCov = SMatrix<f64, 4, 4>;
type ObsMatrix = SMatrix<f64, 4, 8>;

/// Velocity variance of a new track relative to its position variance.
pub const VELOCITY_VAR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    /// `q` in `Q = q·I`.
    pub process_noise: f64,
    /// `r` in `R = r·I`.
    pub meas_noise: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise: 1e-4,
            meas_noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicConfig {
    pub min_track_length: usize,
    pub max_misses: usize,
    pub gate_distance: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            min_track_length: 3,
            max_misses: 2,
            gate_distance: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub id: u64,
    pub mean: StateVec,
    pub cov: StateCov,
    pub age: usize,
    pub misses: usize,
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    for d in 0..STATE_DIM {
        f[(d, d + STATE_DIM)] = 1.0;
    }
    f
}

fn observation() -> ObsMatrix {
    let mut h = ObsMatrix::zeros();
    for d in 0..STATE_DIM {
        h[(d, d)] = 1.0;
    }
    h
}

fn symmetrize(p: &StateCov) -> StateCov {
    (p + p.transpose()) * 0.5
}

/// Cholesky on `P + jitter·I`; tolerates exactly singular blocks (zero
/// velocity variance) but rejects indefinite matrices.
fn check_psd(p: &StateCov) -> Result<()> {
    let jitter = 1e-12 * p.trace().abs().max(1.0);
    if !p.iter().all(|v| v.is_finite()) || Cholesky::new(p + StateCov::identity() * jitter).is_none() {
        return Err(Error::numeric(0, "Kalman covariance lost positive definiteness"));
    }
    Ok(())
}

impl KalmanTrack {
    /// New track at `z` with zero velocity.
    pub fn spawn(id: u64, z: &TargetState, params: &KalmanParams) -> Self {
        let mut mean = StateVec::zeros();
        for (d, v) in z.to_array().iter().enumerate() {
            mean[d] = *v;
        }
        let r = params.meas_noise;
        let mut cov = StateCov::zeros();
        for d in 0..STATE_DIM {
            cov[(d, d)] = r;
            cov[(d + STATE_DIM, d + STATE_DIM)] = VELOCITY_VAR_FACTOR * r;
        }
        Self {
            id,
            mean,
            cov,
            age: 0,
            misses: 0,
        }
    }

    pub fn position(&self) -> TargetState {
        TargetState::new(self.mean[0], self.mean[1], self.mean[2], self.mean[3])
    }
}

/// Constant-velocity prediction: `x ← F x`, `P ← F P Fᵀ + q·I`.
pub fn kalman_predict(track: &KalmanTrack, process_noise: f64) -> Result<KalmanTrack> {
    let f = transition();
    let cov = symmetrize(&(f * track.cov * f.transpose() + StateCov::identity() * process_noise));
    check_psd(&cov)?;
    Ok(KalmanTrack {
        mean: f * track.mean,
        cov,
        age: track.age + 1,
        ..track.clone()
    })
}

/// Gain update with a box measurement, using the Joseph form for `P`.
pub fn kalman_update(track: &KalmanTrack, z: &TargetState, meas_noise: f64) -> Result<KalmanTrack> {
    let h = observation();
    let r = MeasCov::identity() * meas_noise;
    let s = h * track.cov * h.transpose() + r;
    let chol = Cholesky::new(s).ok_or_else(|| Error::numeric(0, "innovation covariance is singular"))?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ with symmetric S and P.
    let k = chol.solve(&(h * track.cov)).transpose();
    let zv = SVector::<f64, 4>::from(z.to_array());
    let mean = track.mean + k * (zv - h * track.mean);
    let i_kh = StateCov::identity() - k * h;
    let cov = symmetrize(&(i_kh * track.cov * i_kh.transpose() + k * r * k.transpose()));
    check_psd(&cov)?;
    Ok(KalmanTrack {
        mean,
        cov,
        misses: 0,
        ..track.clone()
    })
}

struct Emitted {
    frame: u32,
    id: u64,
    state: TargetState,
    coasted: bool,
}

fn run_kalman(
    frames: &[MeasurementFrame],
    params: &KalmanParams,
    gate_distance: f64,
    max_misses: usize,
) -> Result<Vec<Emitted>> {
    let mut tracks: Vec<KalmanTrack> = Vec::new();
    let mut next_id = 1u64;
    let mut out = Vec::new();
    let forbidden = 2.0 * gate_distance + 1.0;
    for frame in frames {
        let dets: Vec<TargetState> = frame.detections().map(|d| d.state).collect();
        let predicted = tracks
            .iter()
            .map(|t| kalman_predict(t, params.process_noise))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(predicted.len() * dets.len());
        for t in &predicted {
            let p = t.position();
            for z in &dets {
                let d = p.distance(z);
                data.push(if d <= gate_distance { d } else { forbidden });
            }
        }
        let c = CostMatrix::new(predicted.len(), dets.len(), data)?;
        let assignment = solve_lap(&c, gate_distance)?;

        let mut survivors = Vec::with_capacity(predicted.len());
        for (track, col) in predicted.into_iter().zip(&assignment.rows) {
            match col {
                Some(j) => {
                    let t = kalman_update(&track, &dets[*j], params.meas_noise)?;
                    out.push(Emitted { frame: frame.frame, id: t.id, state: t.position(), coasted: false });
                    survivors.push(t);
                }
                None if track.misses < max_misses => {
                    let t = KalmanTrack { misses: track.misses + 1, ..track };
                    out.push(Emitted { frame: frame.frame, id: t.id, state: t.position(), coasted: true });
                    survivors.push(t);
                }
                None => {}
            }
        }
        for j in assignment.unassigned_cols(dets.len()) {
            let t = KalmanTrack::spawn(next_id, &dets[j], params);
            next_id += 1;
            out.push(Emitted { frame: frame.frame, id: t.id, state: t.position(), coasted: false });
            survivors.push(t);
        }
        tracks = survivors;
    }
    Ok(out)
}

/// Kalman filter + Hungarian matching; tracks end at their first miss.
pub fn run_kalman_ha(frames: &[MeasurementFrame], params: &KalmanParams, gate_distance: f64) -> Result<TrackTable> {
    let mut table = TrackTable::new();
    for e in run_kalman(frames, params, gate_distance, 0)? {
        table.push(e.frame, e.id, e.state);
    }
    Ok(table)
}

/// Kalman filter + Hungarian matching with coasting through up to
/// `max_misses` misses, followed by removal of trailing coasted boxes and of
/// tracks shorter than `min_track_length` frames.
pub fn run_kalman_ha2(frames: &[MeasurementFrame], params: &KalmanParams, cfg: &HeuristicConfig) -> Result<TrackTable> {
    let emitted = run_kalman(frames, params, cfg.gate_distance, cfg.max_misses)?;
    let mut last_real: std::collections::HashMap<u64, u32> = std::collections::HashMap::new();
    for e in emitted.iter().filter(|e| !e.coasted) {
        let v = last_real.entry(e.id).or_insert(e.frame);
        *v = (*v).max(e.frame);
    }
    let kept: Vec<&Emitted> = emitted
        .iter()
        .filter(|e| last_real.get(&e.id).is_some_and(|last| e.frame <= *last))
        .collect();
    let mut lengths: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for e in &kept {
        *lengths.entry(e.id).or_default() += 1;
    }
    let mut table = TrackTable::new();
    for e in kept {
        if lengths[&e.id] >= cfg.min_track_length {
            table.push(e.frame, e.id, e.state);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Detection;

    fn track_at(x: f64, vx: f64, pos_var: f64, vel_var: f64) -> KalmanTrack {
        let mut t = KalmanTrack::spawn(1, &TargetState::new(x, 0.0, 0.1, 0.1), &KalmanParams::default());
        t.mean[4] = vx;
        t.cov = StateCov::zeros();
        for d in 0..4 {
            t.cov[(d, d)] = pos_var;
            t.cov[(d + 4, d + 4)] = vel_var;
        }
        t
    }

    #[test]
    fn zero_velocity_zero_noise_is_static() {
        let t = track_at(0.2, 0.0, 0.5, 0.0);
        let p = kalman_predict(&t, 0.0).unwrap();
        assert_eq!(p.mean, t.mean);
        assert_eq!(p.cov, t.cov);
    }

    #[test]
    fn unit_velocity_moves_one() {
        let t = track_at(0.0, 1.0, 0.1, 0.1);
        let p = kalman_predict(&t, 0.0).unwrap();
        assert_eq!(p.mean[0], 1.0);
    }

    #[test]
    fn three_step_hand_recursion() {
        // 1D constant velocity, q = 0.01 on both entries, r = 0.1, measurements 1, 2, 3.
        let (q, r) = (0.01, 0.1);
        let mut t = track_at(0.0, 0.0, 1.0, 1.0);
        let (mut x, mut v) = (0.0f64, 0.0f64);
        let (mut pxx, mut pxv, mut pvv) = (1.0f64, 0.0f64, 1.0f64);
        for z in [1.0, 2.0, 3.0] {
            t = kalman_predict(&t, q).unwrap();
            t = kalman_update(&t, &TargetState::new(z, 0.0, 0.1, 0.1), r).unwrap();
            // hand recursion
            x += v;
            let (a, b, c) = (pxx + 2.0 * pxv + pvv + q, pxv + pvv, pvv + q);
            let s = a + r;
            let (kx, kv) = (a / s, b / s);
            let innov = z - x;
            x += kx * innov;
            v += kv * innov;
            pxx = (1.0 - kx) * a;
            pxv = (1.0 - kx) * b;
            pvv = c - kv * b;
            assert!((t.mean[0] - x).abs() < 1e-12);
            assert!((t.mean[4] - v).abs() < 1e-12);
            assert!((t.cov[(0, 0)] - pxx).abs() < 1e-12);
            assert!((t.cov[(0, 4)] - pxv).abs() < 1e-12);
            assert!((t.cov[(4, 4)] - pvv).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_measurement_pins_position() {
        let t = track_at(0.0, 0.3, 0.2, 0.2);
        let z = TargetState::new(0.4, -0.1, 0.05, 0.2);
        let u = kalman_update(&t, &z, 0.0).unwrap();
        for (d, v) in z.to_array().iter().enumerate() {
            assert!((u.mean[d] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn useless_measurement_keeps_prior() {
        let t = track_at(0.1, 0.3, 0.2, 0.2);
        let u = kalman_update(&t, &TargetState::new(5.0, 5.0, 5.0, 5.0), 1e15).unwrap();
        assert!((u.mean - t.mean).norm() < 1e-12);
        assert!((u.cov - t.cov).norm() < 1e-12);
    }

    #[test]
    fn scalar_closed_form_update() {
        let t = track_at(0.0, 0.0, 1.0, 0.0);
        let u = kalman_update(&t, &TargetState::new(1.0, 0.0, 0.1, 0.1), 1.0).unwrap();
        assert!((u.mean[0] - 0.5).abs() < 1e-15);
        assert!((u.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    fn frames_for(xs: &[Option<f64>]) -> Vec<MeasurementFrame> {
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let dets = x.map(|x| Detection::new(TargetState::new(x, 0.0, 0.1, 0.2))).into_iter().collect();
                MeasurementFrame::new(i as u32 + 1, dets)
            })
            .collect()
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let p = KalmanParams::default();
        assert!(run_kalman_ha(&[], &p, 0.3).unwrap().is_empty());
        assert!(run_kalman_ha2(&[], &p, &HeuristicConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn gap_spawns_new_id_in_ha_but_not_ha2() {
        let frames = frames_for(&[Some(0.0), Some(0.01), None, Some(0.03), Some(0.04)]);
        let p = KalmanParams::default();
        let ha = run_kalman_ha(&frames, &p, 0.3).unwrap();
        assert_eq!(ha.ids(), vec![1, 2]);
        let ha2 = run_kalman_ha2(&frames, &p, &HeuristicConfig::default()).unwrap();
        assert_eq!(ha2.ids(), vec![1]);
        assert_eq!(ha2.len(), 5);
    }

    #[test]
    fn single_frame_clutter_is_removed() {
        let frames = frames_for(&[Some(0.0), None, None, None]);
        let ha2 = run_kalman_ha2(&frames, &KalmanParams::default(), &HeuristicConfig::default()).unwrap();
        assert!(ha2.is_empty());
    }
}
