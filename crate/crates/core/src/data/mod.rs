//! Raster tiles, their on-disk format, channel fusion and the synthetic
//! city generator.

use std::path::Path;

use thiserror::Error;

use crate::codec::FormatError;
use crate::kv::KvError;
use crate::tensor::TensorError;

pub mod crop;
pub mod fuse;
pub mod manifest;
pub mod mode;
pub mod ndsm;
pub mod raster;
pub mod resample;
pub mod rseg;
pub mod synth;

pub use crop::{crop_fraction, CropMode};
pub use fuse::{fuse_channels, NormStats};
pub use manifest::{read_tile, write_tile, DatasetManifest, ManifestRecord, Split};
pub use mode::ChannelMode;
pub use ndsm::compute_ndsm;
pub use raster::{class, LabelRaster, Raster, RasterTile, CLASS_NAMES};
pub use resample::resample;
pub use rseg::{read_labels, read_raster, write_labels, write_raster};
pub use synth::{default_test_tiles, generate_city, write_city, CityStyle};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{0}")]
    Invalid(String),
    #[error("tile {tile}: missing {layer} layer")]
    MissingLayer { tile: String, layer: &'static str },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}
