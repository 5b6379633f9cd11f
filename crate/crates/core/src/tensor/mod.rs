//! Minimal dense-tensor engine with reverse-mode differentiation for the
//! SegNet layer set.

mod error;
mod graph;
pub mod ops;
mod param;
#[allow(clippy::module_inception)]
mod tensor;

pub use error::TensorError;
pub use graph::{Graph, Op, Var};
pub use ops::{BnMode, PoolIndices, RunningStats};
pub use param::{sgd_step, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
