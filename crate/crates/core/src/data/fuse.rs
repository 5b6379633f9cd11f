use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::mode::ChannelMode;
use super::raster::RasterTile;
use super::DataError;

/// Dataset-level per-channel standardization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub ndsm_mean: f32,
    pub ndsm_std: f32,
    pub spectral_mean: [f32; 3],
    pub spectral_std: [f32; 3],
}

impl Default for NormStats {
    /// The identity transform.
    fn default() -> Self {
        Self { ndsm_mean: 0.0, ndsm_std: 1.0, spectral_mean: [0.0; 3], spectral_std: [1.0; 3] }
    }
}

#[derive(Default)]
struct Moments {
    n: f64,
    s: f64,
    ss: f64,
}

impl Moments {
    fn push_all(&mut self, vs: &[f32]) {
        for &v in vs {
            self.n += 1.0;
            self.s += v as f64;
            self.ss += (v as f64) * (v as f64);
        }
    }

    /// Mean and population std; a degenerate std becomes 1.
    fn finish(&self) -> (f32, f32) {
        if self.n == 0.0 {
            return (0.0, 1.0);
        }
        let mean = self.s / self.n;
        let std = (self.ss / self.n - mean * mean).max(0.0).sqrt();
        (mean as f32, if std > 1e-6 { std as f32 } else { 1.0 })
    }
}

impl NormStats {
    /// Mean and standard deviation of nDSM and of each spectral band over
    /// every pixel of `tiles`. Absent spectral layers leave the identity
    /// transform for those channels.
    pub fn compute<'a>(tiles: impl IntoIterator<Item = &'a RasterTile>) -> Result<Self, DataError> {
        let mut ndsm = Moments::default();
        let mut bands: [Moments; 3] = Default::default();
        for t in tiles {
            let n = t.ndsm.as_ref().ok_or_else(|| DataError::MissingLayer { tile: t.id.clone(), layer: "ndsm" })?;
            ndsm.push_all(&n.data);
            if let Some(s) = &t.spectral {
                for (c, m) in bands.iter_mut().enumerate() {
                    let clamped: Vec<f32> = s.plane(c).iter().map(|v| v.clamp(0.0, 1.0)).collect();
                    m.push_all(&clamped);
                }
            }
        }
        if ndsm.n == 0.0 {
            return Err(DataError::Invalid("no pixels to compute normalization from".into()));
        }
        let (ndsm_mean, ndsm_std) = ndsm.finish();
        let mut out = Self { ndsm_mean, ndsm_std, ..Self::default() };
        for (c, m) in bands.iter().enumerate() {
            (out.spectral_mean[c], out.spectral_std[c]) = m.finish();
        }
        Ok(out)
    }

    #[inline]
    pub fn ndsm(&self, v: f32) -> f32 {
        (v - self.ndsm_mean) / self.ndsm_std
    }

    /// Standardizes a reflectance value of band `c` after clamping to [0, 1].
    #[inline]
    pub fn spectral(&self, c: usize, v: f32) -> f32 {
        (v.clamp(0.0, 1.0) - self.spectral_mean[c]) / self.spectral_std[c]
    }
}

/// Stacks the channels a mode uses into a `[C, H, W]` tensor. Channel order
/// is fixed: the three spectral bands then nDSM, each standardized with
/// `norm`.
pub fn fuse_channels<T: Scalar>(tile: &RasterTile, mode: ChannelMode, norm: &NormStats) -> Result<Tensor<T>, DataError> {
    let (h, w) = tile.dims();
    let mut data: Vec<T> = Vec::with_capacity(mode.channels() * h * w);
    if mode.needs_spectral() {
        let s = tile.spectral.as_ref().ok_or_else(|| DataError::MissingLayer { tile: tile.id.clone(), layer: "spectral" })?;
        let plane = h * w;
        data.extend(s.data.iter().enumerate().map(|(i, &v)| T::of(norm.spectral(i / plane, v) as f64)));
    }
    if mode.needs_ndsm() {
        let n = tile.ndsm.as_ref().ok_or_else(|| DataError::MissingLayer { tile: tile.id.clone(), layer: "ndsm" })?;
        data.extend(n.data.iter().map(|&v| T::of(norm.ndsm(v) as f64)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Invalid(format!("tile {} has non-finite channel values", tile.id)));
    }
    Ok(Tensor::from_vec(&[mode.channels(), h, w], data)?)
}
