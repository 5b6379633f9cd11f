//! Procedural two-style city scenes with exact labels.
//!
//! Geometry (roads, buildings, trees, cars, clutter) is drawn from a stream
//! that depends on the seed only, so two styles rendered with the same seed
//! share every label mask. The style controls spectra, object heights and
//! terrain.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{write_tile, DatasetManifest, Split};
use super::ndsm::compute_ndsm;
use super::raster::{class, LabelRaster, Raster, RasterTile, CLASS_NAMES};
use super::{DataError, NormStats};
use crate::codec::write_atomic;

/// Spectral appearance of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPalette {
    /// Mean reflectance per band.
    pub mean: [f32; 3],
    /// Std of a per-object brightness offset shared by all bands.
    pub object_sigma: f32,
    /// Std of a per-object, per-band color offset.
    pub chroma_sigma: f32,
    /// Per-pixel noise std.
    pub pixel_sigma: f32,
}

impl ClassPalette {
    fn new(mean: [f32; 3], object_sigma: f32, chroma_sigma: f32, pixel_sigma: f32) -> Self {
        Self { mean, object_sigma, chroma_sigma, pixel_sigma }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CityStyle {
    pub name: String,
    /// One entry per class, indexed by class id.
    pub palette: Vec<ClassPalette>,
    /// Roof height range, meters.
    pub building_height: (f32, f32),
    /// Crown height range, meters.
    pub tree_height: (f32, f32),
    pub car_height: f32,
    pub clutter_height: (f32, f32),
    /// Maximum grass height, meters.
    pub low_vegetation_height: f32,
    /// Distance between parallel road centerlines, pixels.
    pub road_spacing: (usize, usize),
    pub road_width: (usize, usize),
    /// Tree attempts per 1000 block pixels.
    pub tree_density: f32,
    /// Amplitude of terrain undulation, meters.
    pub terrain_roughness: f32,
    pub gsd_cm: f32,
    /// Mixed into the appearance stream so styles differ in noise too.
    pub seed: u64,
}

impl CityStyle {
    /// Style "A": every class has a distinct mean color.
    pub fn a() -> Self {
        Self {
            name: "A".into(),
            palette: vec![
                ClassPalette::new([0.45, 0.45, 0.47], 0.05, 0.02, 0.03),
                ClassPalette::new([0.60, 0.40, 0.35], 0.05, 0.04, 0.03),
                ClassPalette::new([0.40, 0.60, 0.28], 0.04, 0.02, 0.03),
                ClassPalette::new([0.22, 0.45, 0.20], 0.03, 0.02, 0.03),
                ClassPalette::new([0.80, 0.22, 0.25], 0.05, 0.04, 0.03),
                ClassPalette::new([0.75, 0.70, 0.60], 0.05, 0.04, 0.03),
            ],
            building_height: (3.0, 30.0),
            tree_height: (2.0, 10.0),
            car_height: 1.5,
            clutter_height: (0.0, 2.0),
            low_vegetation_height: 0.3,
            road_spacing: (56, 88),
            road_width: (6, 9),
            tree_density: 3.0,
            terrain_roughness: 2.0,
            gsd_cm: 9.0,
            seed: 0xA,
        }
    }

    /// Style "B": roofs share the road color and vegetation is dry, so
    /// only height separates several classes.
    pub fn b() -> Self {
        Self {
            name: "B".into(),
            palette: vec![
                ClassPalette::new([0.50, 0.50, 0.50], 0.05, 0.02, 0.05),
                ClassPalette::new([0.52, 0.50, 0.49], 0.05, 0.02, 0.05),
                ClassPalette::new([0.62, 0.60, 0.35], 0.04, 0.02, 0.05),
                ClassPalette::new([0.30, 0.45, 0.22], 0.03, 0.02, 0.05),
                ClassPalette::new([0.55, 0.35, 0.35], 0.05, 0.20, 0.05),
                ClassPalette::new([0.45, 0.40, 0.38], 0.08, 0.05, 0.06),
            ],
            building_height: (4.0, 25.0),
            tree_height: (3.0, 12.0),
            car_height: 1.5,
            clutter_height: (0.0, 2.0),
            low_vegetation_height: 0.3,
            terrain_roughness: 8.0,
            seed: 0xB,
            ..Self::a()
        }
    }

    pub fn by_name(name: &str) -> Result<Self, DataError> {
        match name {
            "A" | "a" => Ok(Self::a()),
            "B" | "b" => Ok(Self::b()),
            other => Err(DataError::Invalid(format!("unknown city style '{other}' (expected A or B)"))),
        }
    }

    fn check(&self) -> Result<(), DataError> {
        if self.palette.len() != CLASS_NAMES.len() {
            return Err(DataError::Invalid(format!(
                "style {} has {} palette entries, need {}",
                self.name,
                self.palette.len(),
                CLASS_NAMES.len()
            )));
        }
        let ranges = [self.building_height, self.tree_height, self.clutter_height];
        if ranges.iter().any(|&(lo, hi)| !(lo >= 0.0 && hi >= lo)) || self.road_spacing.0 > self.road_spacing.1 {
            return Err(DataError::Invalid(format!("style {} has an inverted range", self.name)));
        }
        if self.road_width.0 == 0 || self.road_width.0 > self.road_width.1 || self.road_spacing.0 <= self.road_width.1 + 8 {
            return Err(DataError::Invalid(format!("style {} has an impossible road layout", self.name)));
        }
        Ok(())
    }
}

/// Object kinds whose heights the style decides.
#[derive(Clone, Copy)]
enum Shape {
    Flat,
    Dome { cy: f32, cx: f32, r: f32 },
}

struct Object {
    class: u8,
    /// Uniform draw in [0, 1) mapped onto the style's height range.
    u: f32,
    shape: Shape,
}

/// Label mask plus the object each pixel belongs to.
struct Layout {
    size: usize,
    labels: Vec<u8>,
    owner: Vec<u32>,
    objects: Vec<Object>,
}

impl Layout {
    fn new(size: usize) -> Self {
        // Object 0 is the background lawn.
        let lawn = Object { class: class::LOW_VEGETATION, u: 0.0, shape: Shape::Flat };
        Self { size, labels: vec![class::LOW_VEGETATION; size * size], owner: vec![0; size * size], objects: vec![lawn] }
    }

    fn add(&mut self, class: u8, u: f32, shape: Shape) -> u32 {
        self.objects.push(Object { class, u, shape });
        (self.objects.len() - 1) as u32
    }

    fn paint(&mut self, y: usize, x: usize, id: u32) {
        let i = y * self.size + x;
        self.labels[i] = self.objects[id as usize].class;
        self.owner[i] = id;
    }

    fn rect_is(&self, y0: usize, x0: usize, h: usize, w: usize, ok: impl Fn(u8) -> bool) -> bool {
        (y0..y0 + h).all(|y| (x0..x0 + w).all(|x| ok(self.labels[y * self.size + x])))
    }

    fn fill_rect(&mut self, y0: usize, x0: usize, h: usize, w: usize, id: u32) {
        for y in y0..(y0 + h).min(self.size) {
            for x in x0..(x0 + w).min(self.size) {
                self.paint(y, x, id);
            }
        }
    }
}

/// Half-open intervals along one axis: road bands and the blocks between.
fn road_bands(rng: &mut ChaCha8Rng, size: usize, style: &CityStyle) -> Vec<(usize, usize)> {
    let mut bands = Vec::new();
    let mut c = rng.gen_range(style.road_spacing.0 / 3..style.road_spacing.0);
    while c < size {
        let w = rng.gen_range(style.road_width.0..=style.road_width.1);
        let lo = c.saturating_sub(w / 2);
        bands.push((lo, (lo + w).min(size)));
        c += rng.gen_range(style.road_spacing.0..=style.road_spacing.1);
    }
    bands
}

fn gaps(bands: &[(usize, usize)], size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for &(lo, hi) in bands {
        if lo > start {
            out.push((start, lo));
        }
        start = hi;
    }
    if start < size {
        out.push((start, size));
    }
    out
}

fn layout(rng: &mut ChaCha8Rng, size: usize, style: &CityStyle) -> Layout {
    let mut l = Layout::new(size);
    let rows = road_bands(rng, size, style);
    let cols = road_bands(rng, size, style);
    for &(lo, hi) in &rows {
        let id = l.add(class::IMPERVIOUS, 0.0, Shape::Flat);
        l.fill_rect(lo, 0, hi - lo, size, id);
    }
    for &(lo, hi) in &cols {
        let id = l.add(class::IMPERVIOUS, 0.0, Shape::Flat);
        l.fill_rect(0, lo, size, hi - lo, id);
    }

    // Cars parked along each road, aligned with it.
    for (bands, horizontal) in [(&rows, true), (&cols, false)] {
        for &(lo, hi) in bands.iter() {
            if hi - lo < 5 {
                continue;
            }
            let mut t = rng.gen_range(0..12);
            while t + 6 < size {
                let lane = if rng.gen_bool(0.5) { lo + 1 } else { hi - 4 };
                if rng.gen_bool(0.45) {
                    let (y0, x0, h, w) = if horizontal { (lane, t, 3, 6) } else { (t, lane, 6, 3) };
                    if l.rect_is(y0, x0, h, w, |c| c == class::IMPERVIOUS) {
                        let id = l.add(class::CAR, rng.gen(), Shape::Flat);
                        l.fill_rect(y0, x0, h, w, id);
                    }
                }
                t += rng.gen_range(9..16);
            }
        }
    }

    for &(by0, by1) in &gaps(&rows, size) {
        for &(bx0, bx1) in &gaps(&cols, size) {
            let (bh, bw) = (by1 - by0, bx1 - bx0);
            if bh < 6 || bw < 6 {
                continue;
            }
            let area = (bh * bw) as f32;

            // Paved yards.
            if bh > 20 && bw > 20 && rng.gen_bool(0.35) {
                let (h, w) = (rng.gen_range(5..12), rng.gen_range(5..12));
                let (y0, x0) = (rng.gen_range(by0 + 2..by1 - h - 1), rng.gen_range(bx0 + 2..bx1 - w - 1));
                let id = l.add(class::IMPERVIOUS, 0.0, Shape::Flat);
                l.fill_rect(y0, x0, h, w, id);
            }

            // Buildings keep a two-pixel margin to roads and each other.
            let attempts = (area / 350.0).ceil() as usize + 1;
            for _ in 0..attempts {
                let (hmax, wmax) = (bh.saturating_sub(4).min(30), bw.saturating_sub(4).min(30));
                if hmax < 8 || wmax < 8 {
                    break;
                }
                let (h, w) = (rng.gen_range(8..=hmax), rng.gen_range(8..=wmax));
                let y0 = rng.gen_range(by0 + 2..=by1 - 2 - h);
                let x0 = rng.gen_range(bx0 + 2..=bx1 - 2 - w);
                let u: f32 = rng.gen();
                if l.rect_is(y0 - 2, x0 - 2, h + 4, w + 4, |c| c == class::LOW_VEGETATION) {
                    let id = l.add(class::BUILDING, u, Shape::Flat);
                    l.fill_rect(y0, x0, h, w, id);
                }
            }

            // Trees may overlap each other but never cover buildings or pavement.
            let trees = (area / 1000.0 * style.tree_density).round() as usize;
            for _ in 0..trees {
                let r = rng.gen_range(3.0f32..7.0);
                let cy = rng.gen_range(by0 as f32..by1 as f32);
                let cx = rng.gen_range(bx0 as f32..bx1 as f32);
                let id = l.add(class::TREE, rng.gen(), Shape::Dome { cy, cx, r });
                let (ylo, yhi) = ((cy - r).floor().max(by0 as f32) as usize, ((cy + r).ceil() as usize).min(by1));
                let (xlo, xhi) = ((cx - r).floor().max(bx0 as f32) as usize, ((cx + r).ceil() as usize).min(bx1));
                for y in ylo..yhi {
                    for x in xlo..xhi {
                        let d2 = (y as f32 + 0.5 - cy).powi(2) + (x as f32 + 0.5 - cx).powi(2);
                        let c = l.labels[y * size + x];
                        if d2 <= r * r && (c == class::LOW_VEGETATION || c == class::TREE) {
                            l.paint(y, x, id);
                        }
                    }
                }
            }

            // Clutter: small heaps on open ground.
            let heaps = (area / 450.0).ceil() as usize;
            for _ in 0..heaps {
                let (h, w) = (rng.gen_range(2..7).min(bh), rng.gen_range(2..7).min(bw));
                let y0 = rng.gen_range(by0..=by1 - h);
                let x0 = rng.gen_range(bx0..=bx1 - w);
                let u: f32 = rng.gen();
                if l.rect_is(y0, x0, h, w, |c| c == class::LOW_VEGETATION) {
                    let id = l.add(class::CLUTTER, u, Shape::Flat);
                    l.fill_rect(y0, x0, h, w, id);
                }
            }
        }
    }
    l
}

fn lerp((lo, hi): (f32, f32), u: f32) -> f32 {
    lo + u * (hi - lo)
}

fn render(l: &Layout, style: &CityStyle, rng: &mut ChaCha8Rng, id: String) -> RasterTile {
    let size = l.size;
    let n = size * size;
    let std_normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let gauss = |rng: &mut ChaCha8Rng| std_normal.sample(rng);

    // Object heights above terrain.
    let mut height = vec![0f32; n];
    let object_height: Vec<f32> = l
        .objects
        .iter()
        .map(|o| match o.class {
            class::BUILDING => lerp(style.building_height, o.u),
            class::TREE => lerp(style.tree_height, o.u),
            class::CAR => style.car_height,
            class::CLUTTER => lerp(style.clutter_height, o.u),
            _ => 0.0,
        })
        .collect();
    for (i, h) in height.iter_mut().enumerate() {
        let o = &l.objects[l.owner[i] as usize];
        let top = object_height[l.owner[i] as usize];
        *h = match (o.class, o.shape) {
            (_, Shape::Dome { cy, cx, r }) => {
                let (y, x) = ((i / size) as f32 + 0.5, (i % size) as f32 + 0.5);
                let d = (((y - cy).powi(2) + (x - cx).powi(2)).sqrt() / r).min(1.0);
                top * (0.4 + 0.6 * (1.0 - d * d).sqrt())
            }
            (class::LOW_VEGETATION, _) => style.low_vegetation_height * rng.gen::<f32>(),
            (class::BUILDING, _) => top + 0.2 * rng.gen::<f32>(),
            _ => top,
        };
    }

    // Smooth terrain from a few low-frequency waves.
    let waves: Vec<(f32, f32, f32, f32)> = (0..3)
        .map(|_| (rng.gen_range(0.3..1.5), rng.gen_range(0.3..1.5), rng.gen_range(0.0..std::f32::consts::TAU), rng.gen_range(0.3..1.0)))
        .collect();
    let base = 100.0 + 20.0 * rng.gen::<f32>();
    let mut dtm = Raster::filled(1, size, size, 0.0);
    for (i, v) in dtm.data.iter_mut().enumerate() {
        let (y, x) = ((i / size) as f32 / size as f32, (i % size) as f32 / size as f32);
        let s: f32 = waves.iter().map(|&(fy, fx, p, a)| a * (std::f32::consts::TAU * (fy * y + fx * x) + p).sin()).sum();
        *v = base + style.terrain_roughness * s / 3.0;
    }
    let dsm = Raster::new(1, size, size, dtm.data.iter().zip(&height).map(|(t, h)| t + h).collect()).expect("dsm dims");
    let ndsm = compute_ndsm(&dsm, &dtm).expect("dsm/dtm share dims");

    // Spectra: class mean, per-object offset, per-pixel noise, tile gain.
    let offsets: Vec<[f32; 3]> = l
        .objects
        .iter()
        .map(|o| {
            let p = &style.palette[o.class as usize];
            let mut d = [0f32; 3];
            let shared = p.object_sigma * gauss(rng);
            for v in &mut d {
                *v = shared + p.chroma_sigma * gauss(rng);
            }
            d
        })
        .collect();
    let gain = 1.0 + 0.03 * gauss(rng);
    let mut spectral = Raster::filled(3, size, size, 0.0);
    for i in 0..n {
        let owner = l.owner[i] as usize;
        let p = &style.palette[l.objects[owner].class as usize];
        for (c, off) in offsets[owner].iter().enumerate() {
            let v = gain * (p.mean[c] + off) + p.pixel_sigma * gauss(rng);
            spectral.data[c * n + i] = v.clamp(0.0, 1.0);
        }
    }

    RasterTile {
        id,
        city: style.name.clone(),
        spectral: Some(spectral),
        dsm: Some(dsm),
        dtm: Some(dtm),
        ndsm: Some(ndsm),
        labels: LabelRaster { height: size, width: size, data: l.labels.clone() },
        gsd_cm: style.gsd_cm,
    }
}

/// Generates `n_tiles` square tiles of side `size` (a multiple of 32).
pub fn generate_city(style: &CityStyle, n_tiles: usize, size: usize, seed: u64) -> Result<Vec<RasterTile>, DataError> {
    style.check()?;
    if size == 0 || !size.is_multiple_of(32) {
        return Err(DataError::Invalid(format!("tile size {size} is not a positive multiple of 32")));
    }
    (0..n_tiles)
        .map(|i| {
            let mut geo = ChaCha8Rng::seed_from_u64(seed);
            geo.set_stream(i as u64);
            let l = layout(&mut geo, size, style);
            let mut look = ChaCha8Rng::seed_from_u64(seed ^ style.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            look.set_stream(i as u64);
            let tile = render(&l, style, &mut look, format!("{}-{seed}-{i:03}", style.name.to_lowercase()));
            tile.validate()?;
            Ok(tile)
        })
        .collect()
}

/// Default number of held-out tiles: a quarter, at least one when there
/// are two or more tiles.
pub fn default_test_tiles(n_tiles: usize) -> usize {
    if n_tiles < 2 {
        0
    } else {
        n_tiles.div_ceil(4)
    }
}

/// Writes tiles, `manifest.tsv` and its normalization sidecar into `dir`.
/// The last `n_test` tiles form the test split; normalization statistics
/// come from the training split.
pub fn write_city(dir: &Path, tiles: &[RasterTile], n_test: usize) -> Result<(DatasetManifest, PathBuf), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let n_train = tiles.len().saturating_sub(n_test);
    let mut manifest = DatasetManifest::new(dir);
    for (i, t) in tiles.iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        manifest.records.push(write_tile(dir, t, split)?);
    }
    let path = dir.join("manifest.tsv");
    manifest.write(&path)?;
    let stats_from = if n_train > 0 { &tiles[..n_train] } else { tiles };
    let stats = NormStats::compute(stats_from)?;
    let sidecar = DatasetManifest::sidecar_path(&path);
    write_atomic(&sidecar, stats.to_kv().render().as_bytes()).map_err(|e| DataError::io(&sidecar, e))?;
    Ok((manifest, path))
}
