use super::param::Param;

/// RMSprop: `cache ← ρ·cache + (1−ρ)·g²`, `θ ← θ − lr·g / (√cache + ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            decay: 0.95,
            eps: 1e-8,
        }
    }
}

impl RmsProp {
    /// Applies one update and clears the gradient.
    pub fn update(&self, param: &mut Param, learning_rate: f64) {
        let rho = self.decay;
        let value = param.value.data_mut();
        let grad = param.grad.data_mut();
        let cache = param.rms_cache.data_mut();
        for ((v, g), c) in value.iter_mut().zip(grad.iter_mut()).zip(cache.iter_mut()) {
            *c = rho * *c + (1.0 - rho) * *g * *g;
            *v -= learning_rate * *g / (c.sqrt() + self.eps);
            *g = 0.0;
        }
    }
}

/// Step-decay schedule `lr(k) = base · factor^⌊k / every⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub every: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 3e-4,
            factor: 0.95,
            every: 20_000,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, iteration: u64) -> f64 {
        let k = iteration / self.every.max(1);
        self.base * self.factor.powi(k.min(i32::MAX as u64) as i32)
    }
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// Softmax restricted to entries where `mask` is true; masked entries are 0.
pub fn masked_softmax(v: &[f64], mask: &[bool]) -> Vec<f64> {
    debug_assert_eq!(v.len(), mask.len());
    let max = v
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v
        .iter()
        .zip(mask)
        .map(|(x, m)| if *m { (x - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::Matrix;

    fn scalar_param(v: f64, g: f64) -> Param {
        let mut p = Param::from_value(Matrix::from_vec(1, 1, vec![v]).unwrap());
        p.grad.set(0, 0, g);
        p
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = scalar_param(0.25, 0.0);
        RmsProp::default().update(&mut p, 0.1);
        assert_eq!(p.value.get(0, 0), 0.25);
    }

    #[test]
    fn first_step_magnitude() {
        // cache = 0.05 g², so the step is lr·|g| / (√0.05·|g|) = lr / √0.05.
        let lr = 1e-3;
        let mut p = scalar_param(0.0, 0.37);
        RmsProp::default().update(&mut p, lr);
        let step = p.value.get(0, 0).abs();
        assert!((step / lr - 4.472135955).abs() < 1e-6, "{}", step / lr);
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn repeated_gradient_steps_shrink() {
        let opt = RmsProp::default();
        let mut p = scalar_param(0.0, 1.0);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let before = p.value.get(0, 0);
            p.grad.set(0, 0, 1.0);
            opt.update(&mut p, 0.01);
            let step = (p.value.get(0, 0) - before).abs();
            assert!(step <= last);
            last = step;
        }
    }

    #[test]
    fn schedule_decays_every_20k() {
        let s = LrSchedule::default();
        assert_eq!(s.at(0), 3e-4);
        assert_eq!(s.at(19_999), 3e-4);
        assert!((s.at(20_000) - 3e-4 * 0.95).abs() < 1e-18);
        assert!((s.at(40_000) - 3e-4 * 0.95 * 0.95).abs() < 1e-18);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]);
        assert!(u.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big[0].is_finite() && (big[0] - 1.0).abs() < 1e-15);
        assert!(big[1] >= 0.0 && big[1] < 1e-300);
    }

    #[test]
    fn masked_softmax_zeroes_masked() {
        let p = masked_softmax(&[5.0, 1.0, 1.0], &[false, true, true]);
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }
}
