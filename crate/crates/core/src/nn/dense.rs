use rand::Rng;

use super::matrix::Matrix;
use super::param::{concat_with_bias, Param, Parameterized};

/// Affine map `y = W · [x; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input_size: usize,
    pub output_size: usize,
    pub weights: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input_size: usize, output_size: usize, rng: &mut R) -> Self {
        Self {
            input_size,
            output_size,
            weights: Param::uniform(output_size, input_size + 1, rng),
        }
    }

    pub fn zeros(input_size: usize, output_size: usize) -> Self {
        Self {
            input_size,
            output_size,
            weights: Param::zeros(output_size, input_size + 1),
        }
    }

    /// Returns the output and the bias-augmented input needed by `backward`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.input_size);
        let z = concat_with_bias(&[x]);
        (self.weights.value.matvec(&z), z)
    }

    pub fn forward_augmented(&self, z: &[f64]) -> Vec<f64> {
        self.weights.value.matvec(z)
    }

    /// Accumulates the weight gradient and returns `dL/dx`.
    pub fn backward(&mut self, z: &[f64], dy: &[f64]) -> Vec<f64> {
        self.weights.grad.add_outer(dy, z);
        let mut dz = vec![0.0; z.len()];
        self.weights.value.tr_matvec_acc(dy, &mut dz);
        dz.truncate(self.input_size);
        dz
    }

    pub fn value(&self) -> &Matrix {
        &self.weights.value
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weights]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weights]
    }
}
