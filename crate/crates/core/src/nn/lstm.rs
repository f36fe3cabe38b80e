use rand::Rng;

use super::param::{concat_with_bias, sigmoid, Param, Parameterized};
use crate::error::{Error, Result};

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// LSTM cell with separate input, output, forget and candidate weight blocks,
/// each of shape `H × (input + H + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub input_gate: Param,
    pub output_gate: Param,
    pub forget_gate: Param,
    pub candidate: Param,
}

/// Recurrent carry of a stack of LSTM layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(layers: usize, hidden_size: usize) -> Self {
        Self {
            h: vec![vec![0.0; hidden_size]; layers],
            c: vec![vec![0.0; hidden_size]; layers],
        }
    }

    pub fn top(&self) -> &[f64] {
        self.h.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    z: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Gate activations of one step, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub forget: Vec<f64>,
    pub candidate: Vec<f64>,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let cols = input_size + hidden_size + 1;
        let mut cell = Self {
            input_size,
            hidden_size,
            input_gate: Param::uniform(hidden_size, cols, rng),
            output_gate: Param::uniform(hidden_size, cols, rng),
            forget_gate: Param::uniform(hidden_size, cols, rng),
            candidate: Param::uniform(hidden_size, cols, rng),
        };
        cell.forget_gate.set_bias(FORGET_BIAS);
        cell
    }

    /// All-zero weights, including the forget bias.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let cols = input_size + hidden_size + 1;
        Self {
            input_size,
            hidden_size,
            input_gate: Param::zeros(hidden_size, cols),
            output_gate: Param::zeros(hidden_size, cols),
            forget_gate: Param::zeros(hidden_size, cols),
            candidate: Param::zeros(hidden_size, cols),
        }
    }

    fn check(&self, input: &[f64], h: &[f64], c: &[f64]) -> Result<()> {
        if input.len() != self.input_size || h.len() != self.hidden_size || c.len() != self.hidden_size
        {
            return Err(Error::invalid(format!(
                "lstm step expects input {} / hidden {}, got {} / {} / {}",
                self.input_size,
                self.hidden_size,
                input.len(),
                h.len(),
                c.len()
            )));
        }
        Ok(())
    }

    /// One checked step of a single cell; returns `(h, c)`.
    pub fn step(&self, input: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(input, h_prev, c_prev)?;
        let cache = self.forward(input, h_prev, c_prev);
        Ok((cache.h, cache.c))
    }

    pub fn gates(&self, input: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<Gates> {
        self.check(input, h_prev, c_prev)?;
        let cache = self.forward(input, h_prev, c_prev);
        Ok(Gates {
            input: cache.i,
            output: cache.o,
            forget: cache.f,
            candidate: cache.g,
        })
    }

    pub fn forward(&self, input: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmCache {
        let z = concat_with_bias(&[input, h_prev]);
        let mut i = self.input_gate.value.matvec(&z);
        let mut o = self.output_gate.value.matvec(&z);
        let mut f = self.forget_gate.value.matvec(&z);
        let mut g = self.candidate.value.matvec(&z);
        i.iter_mut().for_each(|v| *v = sigmoid(*v));
        o.iter_mut().for_each(|v| *v = sigmoid(*v));
        f.iter_mut().for_each(|v| *v = sigmoid(*v));
        g.iter_mut().for_each(|v| *v = v.tanh());
        let n = self.hidden_size;
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        for k in 0..n {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        LstmCache {
            z,
            i,
            o,
            f,
            g,
            c_prev: c_prev.to_vec(),
            tanh_c,
            h,
            c,
        }
    }

    /// Returns `(dL/dinput, dL/dh_prev, dL/dc_prev)`.
    pub fn backward(&mut self, cache: &LstmCache, dh: &[f64], dc: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.hidden_size;
        let mut dai = vec![0.0; n];
        let mut dao = vec![0.0; n];
        let mut daf = vec![0.0; n];
        let mut dag = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let (i, o, f, g, tc) = (cache.i[k], cache.o[k], cache.f[k], cache.g[k], cache.tanh_c[k]);
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dai[k] = dct * g * i * (1.0 - i);
            daf[k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dag[k] = dct * i * (1.0 - g * g);
            dao[k] = d_o * o * (1.0 - o);
            dc_prev[k] = dct * f;
        }
        let mut dz = vec![0.0; cache.z.len()];
        for (p, da) in [
            (&mut self.input_gate, &dai),
            (&mut self.output_gate, &dao),
            (&mut self.forget_gate, &daf),
            (&mut self.candidate, &dag),
        ] {
            p.grad.add_outer(da, &cache.z);
            p.value.tr_matvec_acc(da, &mut dz);
        }
        let dh_prev = dz[self.input_size..self.input_size + n].to_vec();
        dz.truncate(self.input_size);
        (dz, dh_prev, dc_prev)
    }
}

impl Parameterized for LstmCell {
    fn params(&self) -> Vec<&Param> {
        vec![&self.input_gate, &self.output_gate, &self.forget_gate, &self.candidate]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.input_gate,
            &mut self.output_gate,
            &mut self.forget_gate,
            &mut self.candidate,
        ]
    }
}

/// Layers of LSTM cells; layer `l + 1` consumes the hidden state of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmCell>,
}

impl LstmStack {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, layers: usize, rng: &mut R) -> Self {
        let layers = (0..layers)
            .map(|l| LstmCell::new(if l == 0 { input_size } else { hidden_size }, hidden_size, rng))
            .collect();
        Self { layers }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState::zeros(self.layers.len(), self.hidden_size())
    }

    pub fn step(&self, input: &[f64], state: &LstmState) -> Result<LstmState> {
        if state.h.len() != self.layers.len() || state.c.len() != self.layers.len() {
            return Err(Error::invalid("lstm state layer count does not match the stack"));
        }
        let mut next = LstmState { h: Vec::new(), c: Vec::new() };
        let mut x = input.to_vec();
        for (l, cell) in self.layers.iter().enumerate() {
            let (h, c) = cell.step(&x, &state.h[l], &state.c[l])?;
            x = h.clone();
            next.h.push(h);
            next.c.push(c);
        }
        Ok(next)
    }

    pub fn forward(&self, input: &[f64], state: &LstmState) -> Vec<LstmCache> {
        let mut caches: Vec<LstmCache> = Vec::with_capacity(self.layers.len());
        for (l, cell) in self.layers.iter().enumerate() {
            let x = if l == 0 { input } else { &caches[l - 1].h };
            let cache = cell.forward(x, &state.h[l], &state.c[l]);
            caches.push(cache);
        }
        caches
    }

    pub fn state_of(caches: &[LstmCache]) -> LstmState {
        LstmState {
            h: caches.iter().map(|c| c.h.clone()).collect(),
            c: caches.iter().map(|c| c.c.clone()).collect(),
        }
    }

    /// Backward through one time step of every layer.
    ///
    /// `dtop` is `dL/dh` of the top layer from the output head; `dh`/`dc` carry
    /// the recurrent gradients from the following step and are replaced by the
    /// gradients w.r.t. the previous step's state. Returns `dL/dinput`.
    pub fn backward(
        &mut self,
        caches: &[LstmCache],
        dtop: &[f64],
        dh: &mut [Vec<f64>],
        dc: &mut [Vec<f64>],
    ) -> Vec<f64> {
        let top = self.layers.len() - 1;
        let mut from_above: Vec<f64> = dtop.to_vec();
        for l in (0..=top).rev() {
            let dh_total: Vec<f64> = dh[l].iter().zip(&from_above).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.layers[l].backward(&caches[l], &dh_total, &dc[l]);
            dh[l] = dh_prev;
            dc[l] = dc_prev;
            from_above = dx;
        }
        from_above
    }
}

impl Parameterized for LstmStack {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_halves_memory() {
        let cell = LstmCell::zeros(2, 3);
        let c_prev = [0.4, -1.0, 2.0];
        let g = cell.gates(&[1.0, 2.0], &[0.1, 0.2, 0.3], &c_prev).unwrap();
        assert!(g.input.iter().chain(&g.output).chain(&g.forget).all(|v| *v == 0.5));
        assert!(g.candidate.iter().all(|v| *v == 0.0));
        let (h, c) = cell.step(&[1.0, 2.0], &[0.1, 0.2, 0.3], &c_prev).unwrap();
        for k in 0..3 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_forget_gate_preserves_memory() {
        let mut cell = LstmCell::zeros(1, 2);
        cell.forget_gate.set_bias(10.0);
        let v = [0.7, -0.3];
        let (_, c) = cell.step(&[0.0], &[0.0, 0.0], &v).unwrap();
        for k in 0..2 {
            assert!((c[k] - v[k] * sigmoid(10.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(3, 4, &mut rng);
        let cols = cell.forget_gate.value.cols();
        for r in 0..4 {
            assert_eq!(cell.forget_gate.value.get(r, cols - 1), 1.0);
        }
        assert!(cell
            .input_gate
            .value
            .data()
            .iter()
            .all(|v| v.abs() <= crate::nn::param::INIT_SCALE));
    }

    #[test]
    fn matches_gate_by_gate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cell = LstmCell::new(2, 3, &mut rng);
        for p in cell.params_mut() {
            for v in p.value.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let x = [0.3, -0.8];
        let hp = [0.1, -0.5, 0.9];
        let cp = [1.5, -0.2, 0.4];
        let (h, c) = cell.step(&x, &hp, &cp).unwrap();
        let pre = |p: &Param, r: usize| {
            let mut s = p.value.get(r, 5);
            for k in 0..2 {
                s += p.value.get(r, k) * x[k];
            }
            for k in 0..3 {
                s += p.value.get(r, 2 + k) * hp[k];
            }
            s
        };
        for r in 0..3 {
            let i = sigmoid(pre(&cell.input_gate, r));
            let o = sigmoid(pre(&cell.output_gate, r));
            let f = sigmoid(pre(&cell.forget_gate, r));
            let g = pre(&cell.candidate, r).tanh();
            let cr = f * cp[r] + i * g;
            assert!((c[r] - cr).abs() < 1e-14);
            assert!((h[r] - o * cr.tanh()).abs() < 1e-14);
            assert!(h[r].abs() <= 1.0);
        }
    }

    #[test]
    fn stack_step_rejects_wrong_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = LstmStack::new(2, 3, 2, &mut rng);
        let bad = LstmState::zeros(1, 3);
        assert!(stack.step(&[0.0, 0.0], &bad).is_err());
        assert!(stack.step(&[0.0], &stack.zero_state()).is_err());
    }
}
