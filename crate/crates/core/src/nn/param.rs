use rand::Rng;

use super::matrix::Matrix;

/// Half-width of the uniform weight initialization interval.
pub const INIT_SCALE: f64 = 0.08;

/// A trainable weight block with its gradient and RMSprop cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub rms_cache: Matrix,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            value: Matrix::zeros(rows, cols),
            grad: Matrix::zeros(rows, cols),
            rms_cache: Matrix::zeros(rows, cols),
        }
    }

    /// Uniform in `[-INIT_SCALE, INIT_SCALE]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(rows, cols);
        for v in p.value.data_mut() {
            *v = rng.random_range(-INIT_SCALE..=INIT_SCALE);
        }
        p
    }

    pub fn from_value(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            rms_cache: Matrix::zeros(r, c),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Sets the last column (the folded-in bias) to `v`.
    pub fn set_bias(&mut self, v: f64) {
        let (rows, cols) = self.shape();
        for r in 0..rows {
            self.value.set(r, cols - 1, v);
        }
    }
}

/// Anything owning trainable parameters, visited in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_weights(&self) -> usize {
        self.params().iter().map(|p| p.value.data().len()).sum()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `[a; b; ...; 1]`: inputs with the constant bias entry appended.
pub(crate) fn concat_with_bias(parts: &[&[f64]]) -> Vec<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(n + 1);
    for p in parts {
        out.extend_from_slice(p);
    }
    out.push(1.0);
    out
}
