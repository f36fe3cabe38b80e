use rand::Rng;

use super::param::{concat_with_bias, Param, Parameterized};
use crate::error::{Error, Result};

/// Vanilla recurrent cell: `h = tanh(W · [input; h_prev; 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub weights: Param,
}

/// Forward values kept for the backward pass of one step.
#[derive(Debug, Clone)]
pub struct RnnCache {
    z: Vec<f64>,
    pub h: Vec<f64>,
}

impl RnnCell {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        Self {
            input_size,
            hidden_size,
            weights: Param::uniform(hidden_size, input_size + hidden_size + 1, rng),
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            weights: Param::zeros(hidden_size, input_size + hidden_size + 1),
        }
    }

    fn check(&self, input: &[f64], h_prev: &[f64]) -> Result<()> {
        if input.len() != self.input_size || h_prev.len() != self.hidden_size {
            return Err(Error::invalid(format!(
                "rnn step expects input {} / hidden {}, got {} / {}",
                self.input_size,
                self.hidden_size,
                input.len(),
                h_prev.len()
            )));
        }
        Ok(())
    }

    pub fn step(&self, input: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        self.check(input, h_prev)?;
        Ok(self.forward(input, h_prev).h)
    }

    /// Unchecked forward step that records what `backward` needs.
    pub fn forward(&self, input: &[f64], h_prev: &[f64]) -> RnnCache {
        let z = concat_with_bias(&[input, h_prev]);
        let mut h = self.weights.value.matvec(&z);
        h.iter_mut().for_each(|v| *v = v.tanh());
        RnnCache { z, h }
    }

    /// Given `dL/dh`, accumulates weight gradients and returns `(dL/dinput, dL/dh_prev)`.
    pub fn backward(&mut self, cache: &RnnCache, dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let da: Vec<f64> = dh
            .iter()
            .zip(&cache.h)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        self.weights.grad.add_outer(&da, &cache.z);
        let mut dz = vec![0.0; cache.z.len()];
        self.weights.value.tr_matvec_acc(&da, &mut dz);
        let dh_prev = dz[self.input_size..self.input_size + self.hidden_size].to_vec();
        dz.truncate(self.input_size);
        (dz, dh_prev)
    }
}

impl Parameterized for RnnCell {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weights]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weights]
    }
}
