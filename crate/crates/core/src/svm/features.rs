use crate::data::{ChannelMode, RasterTile};

use super::SvmError;

/// Side of the square neighbourhood around each pixel.
pub const PATCH: usize = 5;
const HALF: isize = (PATCH / 2) as isize;

/// Mirror index without repeating the edge pixel.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Pulls 5x5 patch features out of one tile. Channel order is surface
/// (nDSM, meters) then spectral (reflectance clamped to [0, 1]); each
/// channel contributes its patch in row-major order.
pub struct PatchExtractor<'a> {
    planes: Vec<&'a [f32]>,
    clamp: Vec<bool>,
    height: usize,
    width: usize,
}

impl<'a> PatchExtractor<'a> {
    pub fn new(tile: &'a RasterTile, mode: ChannelMode) -> Result<Self, SvmError> {
        let mut planes = Vec::with_capacity(4);
        let mut clamp = Vec::with_capacity(4);
        if mode.needs_ndsm() {
            let n = tile.ndsm.as_ref().ok_or_else(|| SvmError::MissingChannel { tile: tile.id.clone(), layer: "ndsm" })?;
            planes.push(n.plane(0));
            clamp.push(false);
        }
        if mode.needs_spectral() {
            let s = tile.spectral.as_ref().ok_or_else(|| SvmError::MissingChannel { tile: tile.id.clone(), layer: "spectral" })?;
            for c in 0..3 {
                planes.push(s.plane(c));
                clamp.push(true);
            }
        }
        let (height, width) = tile.dims();
        Ok(Self { planes, clamp, height, width })
    }

    pub fn dim(&self) -> usize {
        self.planes.len() * PATCH * PATCH
    }

    /// Appends the feature vector of pixel `(y, x)` to `out`.
    pub fn extract_into(&self, y: usize, x: usize, out: &mut Vec<f64>) {
        for (plane, &clamp) in self.planes.iter().zip(&self.clamp) {
            for dy in -HALF..=HALF {
                let row = mirror(y as isize + dy, self.height) * self.width;
                for dx in -HALF..=HALF {
                    let v = plane[row + mirror(x as isize + dx, self.width)];
                    out.push(if clamp { v.clamp(0.0, 1.0) } else { v } as f64);
                }
            }
        }
    }

    pub fn extract(&self, y: usize, x: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.extract_into(y, x, &mut v);
        v
    }
}

/// Raw (unnormalized) patch features of pixel `(y, x)`: length 25, 75 or
/// 100 for surface, spectral or fused mode.
pub fn extract_features(tile: &RasterTile, y: usize, x: usize, mode: ChannelMode) -> Result<Vec<f64>, SvmError> {
    let (h, w) = tile.dims();
    if y >= h || x >= w {
        return Err(SvmError::Invalid(format!("pixel ({y}, {x}) outside {h}x{w} tile")));
    }
    Ok(PatchExtractor::new(tile, mode)?.extract(y, x))
}

/// Per-dimension z-score transform fitted on training features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    /// Population statistics; constant dimensions get std 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, SvmError> {
        let first = rows.first().ok_or_else(|| SvmError::Invalid("no samples".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(SvmError::LengthMismatch { expected: d, got: r.len() });
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        let std = var.into_iter().map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::LengthMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelRaster, Raster};

    fn tile(h: usize, w: usize) -> RasterTile {
        RasterTile {
            id: "t".into(),
            city: "c".into(),
            spectral: Some(Raster::new(3, h, w, (0..3 * h * w).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap()),
            dsm: None,
            dtm: None,
            ndsm: Some(Raster::new(1, h, w, (0..h * w).map(|i| (i % 13) as f32).collect()).unwrap()),
            labels: LabelRaster::filled(h, w, 0),
            gsd_cm: 9.0,
        }
    }

    #[test]
    fn mirror_indices() {
        let got: Vec<usize> = (-3..8).map(|i| mirror(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn lengths_per_mode() {
        let t = tile(8, 8);
        for (mode, len) in [(ChannelMode::Surface, 25), (ChannelMode::Spectral, 75), (ChannelMode::Fused, 100)] {
            assert_eq!(extract_features(&t, 0, 7, mode).unwrap().len(), len);
        }
    }

    #[test]
    fn fused_is_surface_then_spectral() {
        let t = tile(9, 7);
        for (y, x) in [(0, 0), (4, 3), (8, 6)] {
            let mut want = extract_features(&t, y, x, ChannelMode::Surface).unwrap();
            want.extend(extract_features(&t, y, x, ChannelMode::Spectral).unwrap());
            assert_eq!(extract_features(&t, y, x, ChannelMode::Fused).unwrap(), want);
        }
    }

    #[test]
    fn constant_tile_gives_constant_vector() {
        let mut t = tile(6, 6);
        t.ndsm = Some(Raster::filled(1, 6, 6, 2.5));
        let v = extract_features(&t, 0, 0, ChannelMode::Surface).unwrap();
        assert!(v.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn missing_channel() {
        let mut t = tile(6, 6);
        t.ndsm = None;
        assert!(matches!(extract_features(&t, 0, 0, ChannelMode::Fused), Err(SvmError::MissingChannel { .. })));
    }

    #[test]
    fn norm_standardizes() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = FeatureNorm::fit(&rows).unwrap();
        assert_eq!(n.apply(&[1.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
        assert!(n.apply(&[1.0]).is_err());
    }
}
