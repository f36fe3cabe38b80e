//! A generic recurrent regressor (cell stack + affine head + MSE loss) with
//! backpropagation through time. Used for gradient checking the cells on
//! their own; the tracking networks unroll their own graphs.

use rand::Rng;

use super::dense::Dense;
use super::lstm::{LstmCache, LstmStack};
use super::param::{Param, Parameterized};
use super::rnn::{RnnCache, RnnCell};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CellStack {
    Rnn(Vec<RnnCell>),
    Lstm(LstmStack),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqStep {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRegressor {
    pub cells: CellStack,
    pub head: Dense,
}

enum StepCache {
    Rnn(Vec<RnnCache>),
    Lstm(Vec<LstmCache>),
}

impl SequenceRegressor {
    pub fn rnn<R: Rng + ?Sized>(input: usize, hidden: usize, layers: usize, output: usize, rng: &mut R) -> Self {
        let cells = (0..layers)
            .map(|l| RnnCell::new(if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self {
            cells: CellStack::Rnn(cells),
            head: Dense::new(hidden, output, rng),
        }
    }

    pub fn lstm<R: Rng + ?Sized>(input: usize, hidden: usize, layers: usize, output: usize, rng: &mut R) -> Self {
        Self {
            cells: CellStack::Lstm(LstmStack::new(input, hidden, layers, rng)),
            head: Dense::new(hidden, output, rng),
        }
    }

    fn layers(&self) -> usize {
        match &self.cells {
            CellStack::Rnn(c) => c.len(),
            CellStack::Lstm(s) => s.layers.len(),
        }
    }

    fn hidden(&self) -> usize {
        match &self.cells {
            CellStack::Rnn(c) => c[0].hidden_size,
            CellStack::Lstm(s) => s.hidden_size(),
        }
    }

    fn input_size(&self) -> usize {
        match &self.cells {
            CellStack::Rnn(c) => c[0].input_size,
            CellStack::Lstm(s) => s.input_size(),
        }
    }

    fn validate(&self, seq: &[SeqStep]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::invalid("sequence must not be empty"));
        }
        for s in seq {
            if s.input.len() != self.input_size() || s.target.len() != self.head.output_size {
                return Err(Error::invalid("sequence step has wrong input or target size"));
            }
        }
        Ok(())
    }

    /// Forward pass over the sequence; returns per-step caches, head inputs,
    /// outputs and the loss.
    #[allow(clippy::type_complexity)]
    fn unroll(&self, seq: &[SeqStep]) -> Result<(Vec<StepCache>, Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
        self.validate(seq)?;
        let (layers, hidden) = (self.layers(), self.hidden());
        let mut h = vec![vec![0.0; hidden]; layers];
        let mut c = vec![vec![0.0; hidden]; layers];
        let mut caches = Vec::with_capacity(seq.len());
        let mut head_in = Vec::with_capacity(seq.len());
        let mut outputs = Vec::with_capacity(seq.len());
        let mut loss = 0.0;
        let norm = (seq.len() * self.head.output_size) as f64;
        for (t, step) in seq.iter().enumerate() {
            let top = match &self.cells {
                CellStack::Rnn(cells) => {
                    let mut cs: Vec<RnnCache> = Vec::with_capacity(layers);
                    let mut x = step.input.clone();
                    for (l, cell) in cells.iter().enumerate() {
                        let cache = cell.forward(&x, &h[l]);
                        h[l] = cache.h.clone();
                        x = cache.h.clone();
                        cs.push(cache);
                    }
                    caches.push(StepCache::Rnn(cs));
                    h[layers - 1].clone()
                }
                CellStack::Lstm(stack) => {
                    let state = super::lstm::LstmState { h: h.clone(), c: c.clone() };
                    let cs = stack.forward(&step.input, &state);
                    let next = LstmStack::state_of(&cs);
                    h = next.h;
                    c = next.c;
                    caches.push(StepCache::Lstm(cs));
                    h[layers - 1].clone()
                }
            };
            let (y, z) = self.head.forward(&top);
            for (yi, ti) in y.iter().zip(&step.target) {
                loss += (yi - ti) * (yi - ti) / norm;
            }
            if !loss.is_finite() || y.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(t, "forward pass produced a non-finite value"));
            }
            head_in.push(z);
            outputs.push(y);
        }
        Ok((caches, head_in, outputs, loss))
    }

    /// Mean squared error over all steps and outputs.
    pub fn loss(&self, seq: &[SeqStep]) -> Result<f64> {
        Ok(self.unroll(seq)?.3)
    }

    /// Clears gradients, then runs forward and backward through time.
    pub fn bptt_gradients(&mut self, seq: &[SeqStep]) -> Result<f64> {
        self.zero_grads();
        self.accumulate_gradients(seq)
    }

    /// Adds this sequence's gradients to the existing ones and returns its loss.
    pub fn accumulate_gradients(&mut self, seq: &[SeqStep]) -> Result<f64> {
        let (caches, head_in, outputs, loss) = self.unroll(seq)?;
        let (layers, hidden) = (self.layers(), self.hidden());
        let norm = (seq.len() * self.head.output_size) as f64;
        let mut dh = vec![vec![0.0; hidden]; layers];
        let mut dc = vec![vec![0.0; hidden]; layers];
        for t in (0..seq.len()).rev() {
            let dy: Vec<f64> = outputs[t]
                .iter()
                .zip(&seq[t].target)
                .map(|(y, tg)| 2.0 * (y - tg) / norm)
                .collect();
            let dtop = self.head.backward(&head_in[t], &dy);
            match (&mut self.cells, &caches[t]) {
                (CellStack::Rnn(cells), StepCache::Rnn(cs)) => {
                    let mut from_above = dtop;
                    for l in (0..layers).rev() {
                        let total: Vec<f64> = dh[l].iter().zip(&from_above).map(|(a, b)| a + b).collect();
                        let (dx, dprev) = cells[l].backward(&cs[l], &total);
                        dh[l] = dprev;
                        from_above = dx;
                    }
                }
                (CellStack::Lstm(stack), StepCache::Lstm(cs)) => {
                    stack.backward(cs, &dtop, &mut dh, &mut dc);
                }
                _ => unreachable!("cache kind always matches the cell stack"),
            }
            if dh.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::numeric(t, "backward pass produced a non-finite gradient"));
            }
        }
        Ok(loss)
    }
}

impl Parameterized for SequenceRegressor {
    fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = match &self.cells {
            CellStack::Rnn(c) => c.iter().flat_map(|c| c.params()).collect(),
            CellStack::Lstm(s) => s.params(),
        };
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = match &mut self.cells {
            CellStack::Rnn(c) => c.iter_mut().flat_map(|c| c.params_mut()).collect(),
            CellStack::Lstm(s) => s.params_mut(),
        };
        out.extend(self.head.params_mut());
        out
    }
}
