use super::DataError;

/// Continuous multi-channel raster, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if data.len() != channels * height * width {
            return Err(DataError::Invalid(format!(
                "raster {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Raster {
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Raster { channels: self.channels, height: h, width: w, data }
    }
}

/// Per-pixel class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, DataError> {
        if data.len() != height * width {
            return Err(DataError::Invalid(format!(
                "label raster {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        Self { height, width, data: vec![class; height * width] }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Largest class id present, if any.
    pub fn max_class(&self) -> Option<u8> {
        self.data.iter().copied().max()
    }

    /// One-hot indicator for `class`: 1 where the pixel belongs to it.
    pub fn indicator(&self, class: u8) -> Vec<u8> {
        self.data.iter().map(|&c| u8::from(c == class)).collect()
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> LabelRaster {
        let mut data = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        LabelRaster { height: h, width: w, data }
    }
}

/// The six land-cover classes, in id order.
pub const CLASS_NAMES: [&str; 6] = ["impervious", "building", "low_vegetation", "tree", "car", "clutter"];

pub mod class {
    pub const IMPERVIOUS: u8 = 0;
    pub const BUILDING: u8 = 1;
    pub const LOW_VEGETATION: u8 = 2;
    pub const TREE: u8 = 3;
    pub const CAR: u8 = 4;
    pub const CLUTTER: u8 = 5;
}

/// One self-contained multi-channel tile with aligned labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterTile {
    pub id: String,
    pub city: String,
    /// Three bands, reflectance in [0, 1].
    pub spectral: Option<Raster>,
    /// Surface elevation, meters.
    pub dsm: Option<Raster>,
    /// Terrain elevation, meters.
    pub dtm: Option<Raster>,
    /// Object height above terrain, meters.
    pub ndsm: Option<Raster>,
    pub labels: LabelRaster,
    pub gsd_cm: f32,
}

/// Tolerance of the `ndsm = dsm - dtm` consistency check, meters.
pub const NDSM_TOLERANCE: f32 = 1e-5;

impl RasterTile {
    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (h, w) = self.dims();
        if h == 0 || w == 0 {
            return Err(DataError::Invalid(format!("tile {} is empty", self.id)));
        }
        let layers = [("spectral", &self.spectral, 3), ("dsm", &self.dsm, 1), ("dtm", &self.dtm, 1), ("ndsm", &self.ndsm, 1)];
        for (name, layer, ch) in layers {
            if let Some(r) = layer {
                if r.dims() != (h, w) || r.channels != ch {
                    return Err(DataError::Invalid(format!(
                        "tile {}: {name} is {}x{}x{}, expected {ch}x{h}x{w}",
                        self.id, r.channels, r.height, r.width
                    )));
                }
            }
        }
        if let (Some(dsm), Some(dtm), Some(ndsm)) = (&self.dsm, &self.dtm, &self.ndsm) {
            for ((s, t), n) in dsm.data.iter().zip(&dtm.data).zip(&ndsm.data) {
                let want = (s - t).max(0.0);
                if (n - want).abs() > NDSM_TOLERANCE {
                    return Err(DataError::Invalid(format!("tile {}: ndsm inconsistent with dsm - dtm", self.id)));
                }
            }
        }
        Ok(())
    }

    /// Crops every layer consistently.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> RasterTile {
        let c = |r: &Option<Raster>| r.as_ref().map(|r| r.crop(y0, x0, h, w));
        RasterTile {
            id: self.id.clone(),
            city: self.city.clone(),
            spectral: c(&self.spectral),
            dsm: c(&self.dsm),
            dtm: c(&self.dtm),
            ndsm: c(&self.ndsm),
            labels: self.labels.crop(y0, x0, h, w),
            gsd_cm: self.gsd_cm,
        }
    }

    /// Buildings-vs-rest relabeling for the binary building task.
    pub fn to_binary_buildings(&self) -> RasterTile {
        let mut t = self.clone();
        t.labels = LabelRaster { height: self.labels.height, width: self.labels.width, data: self.labels.indicator(class::BUILDING) };
        t
    }
}
