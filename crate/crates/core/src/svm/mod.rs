//! Patch-feature RBF support vector machines trained with SMO and combined
//! one-vs-one.

mod downselect;
mod features;
mod io;
mod kernel;
mod ovo;
mod smo;
mod tiles;

use thiserror::Error;

use crate::codec::FormatError;

pub use downselect::{downselect, downselect_fraction, downselect_len, fraction_len};
pub use features::{extract_features, FeatureNorm, PatchExtractor, PATCH};
pub use io::{decode_svm, encode_svm, load_svm, save_svm};
pub use kernel::{rbf_kernel, squared_distance};
pub use ovo::{default_gamma, train_one_vs_one, OvoConfig, OvoModel, OvoPair};
pub use smo::{dual_objective, train_smo_binary, SmoConfig, SvmModel};
pub use tiles::{predict_tile, sample_features, PixelPool};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("{0}")]
    Invalid(String),
    #[error("tile {tile} has no {layer} layer")]
    MissingChannel { tile: String, layer: &'static str },
    #[error("feature vector of length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("training samples contain a single class")]
    SingleClass,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
}
