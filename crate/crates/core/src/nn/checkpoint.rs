//! Versioned little-endian binary container for trained weights.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       8 bytes   "RNNTRKCP"
//! version     u32       = 1
//! kind        u32       1 = motion net, 2 = association net, 3 = sequence regressor
//! iteration   u64       training iterations completed
//! n_sizes     u32       followed by n_sizes × u32 layer sizes
//! n_params    u32       followed by, per block:
//!     rows u32, cols u32, rows·cols × f64 (IEEE-754 bits, row-major)
//! ```
//!
//! Parameter blocks appear in the owning model's `Parameterized` order.

use std::io::{Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::param::Parameterized;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RNNTRKCP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Motion = 1,
    Association = 2,
    Sequence = 3,
}

impl ModelKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            1 => Ok(ModelKind::Motion),
            2 => Ok(ModelKind::Association),
            3 => Ok(ModelKind::Sequence),
            other => Err(Error::Checkpoint(format!("unknown model kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub iteration: u64,
    pub sizes: Vec<u32>,
    pub params: Vec<Matrix>,
}

impl Checkpoint {
    pub fn capture<M: Parameterized>(kind: ModelKind, iteration: u64, sizes: Vec<u32>, model: &M) -> Self {
        Self {
            kind,
            iteration,
            sizes,
            params: model.params().iter().map(|p| p.value.clone()).collect(),
        }
    }

    /// Copies the stored blocks into `model`, checking count and shapes.
    pub fn restore_into<M: Parameterized>(&self, model: &mut M) -> Result<()> {
        let mut targets = model.params_mut();
        if targets.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter blocks, model expects {}",
                self.params.len(),
                targets.len()
            )));
        }
        for (i, (dst, src)) in targets.iter_mut().zip(&self.params).enumerate() {
            if dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "block {i} has shape {:?}, model expects {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.value = src.clone();
        }
        Ok(())
    }

    pub fn size(&self, i: usize) -> Result<usize> {
        self.sizes
            .get(i)
            .map(|v| *v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("missing size field {i}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for s in &self.sizes {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for m in &self.params {
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_u32(r.u32()?)?;
        let iteration = r.u64()?;
        let n_sizes = r.u32()? as usize;
        let sizes = (0..n_sizes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params.min(1024));
        for _ in 0..n_params {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint("block size overflow".into()))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.push(Matrix::from_vec(rows, cols, data).map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after last block".into()));
        }
        Ok(Self {
            kind,
            iteration,
            sizes,
            params,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sequence::SequenceRegressor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout_is_fixed() {
        let ck = Checkpoint {
            kind: ModelKind::Sequence,
            iteration: 7,
            sizes: vec![3],
            params: vec![Matrix::from_vec(1, 1, vec![1.5]).unwrap()],
        };
        let b = ck.to_bytes();
        assert_eq!(&b[..8], b"RNNTRKCP");
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[3, 0, 0, 0]);
        assert_eq!(&b[16..24], &[7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[b.len() - 8..], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 8 + 4 + 4 + 8 + 4 + 4 + 4 + 8 + 8);
    }

    #[test]
    fn round_trip_restores_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = SequenceRegressor::lstm(2, 3, 2, 1, &mut rng);
        let ck = Checkpoint::capture(ModelKind::Sequence, 42, vec![2, 3, 2, 1], &net);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut other = SequenceRegressor::lstm(2, 3, 2, 1, &mut ChaCha8Rng::seed_from_u64(1));
        back.restore_into(&mut other).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn truncated_and_mismatched_inputs_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = SequenceRegressor::rnn(2, 3, 1, 1, &mut rng);
        let bytes = Checkpoint::capture(ModelKind::Sequence, 0, vec![], &net).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let mut bigger = SequenceRegressor::rnn(2, 4, 1, 1, &mut rng);
        assert!(ck.restore_into(&mut bigger).is_err());
    }
}
