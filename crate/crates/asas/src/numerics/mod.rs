//! Dense tensors, the autodiff tape, and the Adagrad optimizer.

pub mod lstm;
pub mod optim;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use lstm::{lstm_step, LstmCellVars};
pub use optim::{clip_global_norm, AdagradConfig, OptimizerState};
pub use scalar::{Dtype, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{softmax, Tensor};
