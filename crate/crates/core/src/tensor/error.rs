use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("batch norm evaluated before running statistics were initialized")]
    UninitializedRunningStats,
    #[error("pooling index {index} at pooled cell {cell} does not address its 2x2 window")]
    CorruptPoolIndex { cell: usize, index: u32 },
    #[error("non-finite gradient for parameter {param} ({name})")]
    NonFiniteGradient { param: usize, name: String },
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape { op, detail: detail.into() }
}
