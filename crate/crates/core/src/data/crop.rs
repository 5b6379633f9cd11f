use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raster::RasterTile;
use super::DataError;

/// Smallest crop side accepted for training.
pub const MIN_CROP: usize = 32;

/// How a sample proportion maps onto crop sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CropMode {
    /// Height and width each scale by the fraction (area scales by its square).
    #[default]
    PerAxis,
    /// The crop area scales by the fraction.
    Area,
}

impl fmt::Display for CropMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CropMode::PerAxis => "per_axis",
            CropMode::Area => "area",
        })
    }
}

impl FromStr for CropMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_axis" | "per-axis" => Ok(CropMode::PerAxis),
            "area" => Ok(CropMode::Area),
            other => Err(DataError::Invalid(format!("unknown crop mode '{other}'"))),
        }
    }
}

/// Side length of a crop of `len` pixels, rounded down to even.
pub fn crop_len(len: usize, fraction: f64, mode: CropMode) -> usize {
    let f = match mode {
        CropMode::PerAxis => fraction,
        CropMode::Area => fraction.sqrt(),
    };
    let side = ((len as f64) * f).floor() as usize;
    side.min(len) & !1
}

/// Random crop covering `fraction` of the tile, anchored uniformly over all
/// valid positions; every layer is cropped consistently.
pub fn crop_fraction(tile: &RasterTile, fraction: f64, mode: CropMode, seed: u64) -> Result<RasterTile, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Invalid(format!("crop fraction {fraction} outside (0, 1]")));
    }
    let (h, w) = tile.dims();
    let (ch, cw) = (crop_len(h, fraction, mode), crop_len(w, fraction, mode));
    if ch < MIN_CROP || cw < MIN_CROP {
        return Err(DataError::Invalid(format!(
            "fraction {fraction} of {h}x{w} gives a {ch}x{cw} crop, below the {MIN_CROP}px minimum"
        )));
    }
    if fraction == 1.0 && (ch, cw) == (h, w) {
        return Ok(tile.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = rng.gen_range(0..=h - ch);
    let x0 = rng.gen_range(0..=w - cw);
    Ok(tile.crop(y0, x0, ch, cw))
}
