//! Multi-modal semantic segmentation of overhead imagery: a small autodiff
//! engine with SegNet-style networks, an RBF SVM baseline, the raster data
//! pipeline and the evaluation protocols.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod checksum;
pub mod codec;
pub mod data;
pub mod eval;
pub mod kv;
pub mod net;
pub mod scalar;
pub mod svm;
pub mod tensor;

pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type NetworkModel32 = net::NetworkModel<f32>;
pub type NetworkModel64 = net::NetworkModel<f64>;
