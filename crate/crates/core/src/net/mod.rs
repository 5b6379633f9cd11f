//! SegNet / SegNet Lite: construction, class weighting, the weighted NLL
//! objectives, training and full-tile prediction.

mod checkpoint;
mod loss;
mod model;
mod predict;
mod spec;
mod train;
mod weights;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{
    binary_weighted_nll, loss_weighted_binary, loss_weighted_multiclass, softmax, softmax_weighted_nll, ProbabilityRaster,
    Reduction, EPS,
};
pub use model::{InputConfig, NetworkModel};
pub use predict::predict_raster;
pub use spec::{Architecture, BlockSpec, ConvLayerSpec, NetworkSpec, ParameterCounts, SEGNET_BLOCKS, SEGNET_LITE_BLOCKS};
pub use train::{train_network, TrainConfig, TrainHistory};
pub use weights::{compute_class_weights, AbsentClassPolicy, ClassWeights};

use thiserror::Error;

use crate::codec::FormatError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("class {0} never occurs in the training labels")]
    AbsentClass(usize),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    NonFinite { epoch: usize, step: usize, detail: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
