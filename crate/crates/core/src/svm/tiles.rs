use rayon::prelude::*;

use crate::data::{LabelRaster, RasterTile};

use super::features::PatchExtractor;
use super::ovo::OvoModel;
use super::SvmError;

/// Flat index over every pixel of a tile set, tile by tile in row-major
/// order.
#[derive(Clone, Debug)]
pub struct PixelPool {
    offsets: Vec<usize>,
    widths: Vec<usize>,
}

impl PixelPool {
    pub fn new(tiles: &[RasterTile]) -> Self {
        let mut offsets = vec![0];
        let mut widths = Vec::with_capacity(tiles.len());
        for t in tiles {
            let (h, w) = t.dims();
            offsets.push(offsets.last().unwrap() + h * w);
            widths.push(w);
        }
        Self { offsets, widths }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(tile, y, x)` of flat index `i`.
    pub fn locate(&self, i: usize) -> (usize, usize, usize) {
        assert!(i < self.len(), "pixel {i} outside a pool of {}", self.len());
        let t = self.offsets.partition_point(|&o| o <= i) - 1;
        let r = i - self.offsets[t];
        (t, r / self.widths[t], r % self.widths[t])
    }
}

/// Raw features and (mapped) labels of the pooled pixels `indices`.
pub fn sample_features(
    tiles: &[RasterTile],
    indices: &[usize],
    mode: crate::data::ChannelMode,
    relabel: impl Fn(u8) -> u8,
) -> Result<(Vec<Vec<f64>>, Vec<u8>), SvmError> {
    let pool = PixelPool::new(tiles);
    let extractors = tiles.iter().map(|t| PatchExtractor::new(t, mode)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= pool.len() {
            return Err(SvmError::Invalid(format!("pixel {i} outside a pool of {}", pool.len())));
        }
        let (t, y, x) = pool.locate(i);
        rows.push(extractors[t].extract(y, x));
        labels.push(relabel(tiles[t].labels.at(y, x)));
    }
    Ok((rows, labels))
}

/// Classifies every pixel of `tile`.
pub fn predict_tile(model: &OvoModel, tile: &RasterTile) -> Result<LabelRaster, SvmError> {
    let ex = PatchExtractor::new(tile, model.mode)?;
    let (h, w) = tile.dims();
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| model.predict(&ex.extract(y, x))).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    LabelRaster::new(h, w, rows.concat()).map_err(|e| SvmError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_city, ChannelMode, CityStyle};

    #[test]
    fn pool_locates_across_tiles() {
        let tiles = generate_city(&CityStyle::a(), 2, 32, 1).unwrap();
        let pool = PixelPool::new(&tiles);
        assert_eq!(pool.len(), 2 * 32 * 32);
        assert_eq!(pool.locate(0), (0, 0, 0));
        assert_eq!(pool.locate(32 * 32 + 33), (1, 1, 1));
        let (x, y) = sample_features(&tiles, &[5, 1100], ChannelMode::Fused, |c| c).unwrap();
        assert_eq!(x[0].len(), 100);
        assert_eq!(y[1], tiles[1].labels.at(2, 12));
    }
}
