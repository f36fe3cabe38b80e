//! Dense numeric core: matrices, recurrent cells with manual backward passes,
//! RMSprop, finite-difference checking and weight checkpoints.

pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod optim;
pub mod param;
pub mod rnn;
pub mod sequence;

pub use checkpoint::{Checkpoint, ModelKind};
pub use dense::Dense;
pub use gradcheck::{check_gradients, relative_error, GradCheckReport, FD_STEP};
pub use lstm::{LstmCell, LstmStack, LstmState};
pub use matrix::Matrix;
pub use optim::{masked_softmax, softmax, LrSchedule, RmsProp};
pub use param::{sigmoid, Param, Parameterized};
pub use rnn::RnnCell;
pub use sequence::{CellStack, SeqStep, SequenceRegressor};

/// Deterministic RNG used for weight initialization and data generation.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeded RNG; the same seed yields bit-identical streams on every platform.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
