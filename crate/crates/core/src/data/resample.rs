use super::raster::{LabelRaster, Raster, RasterTile};
use super::DataError;

/// Output length for an input of `len` pixels when the ground sample
/// distance grows by `num:den`.
pub fn resampled_len(len: usize, num: u32, den: u32) -> usize {
    ((len as f64) * den as f64 / num as f64).round() as usize
}

/// Source-pixel weights for each output pixel of an area average.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < src {
                let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, (overlap / scale) as f32));
                }
                i += 1;
            }
            w
        })
        .collect()
}

fn resample_raster(r: &Raster, oh: usize, ow: usize) -> Raster {
    let wy = area_weights(r.height, oh);
    let wx = area_weights(r.width, ow);
    let mut out = Raster::filled(r.channels, oh, ow, 0.0);
    let mut rows = vec![0f32; oh * r.width];
    for c in 0..r.channels {
        let src = r.plane(c);
        rows.fill(0.0);
        for (oy, ws) in wy.iter().enumerate() {
            let dst = &mut rows[oy * r.width..(oy + 1) * r.width];
            for &(sy, wgt) in ws {
                for (d, s) in dst.iter_mut().zip(&src[sy * r.width..(sy + 1) * r.width]) {
                    *d += wgt * s;
                }
            }
        }
        let plane = out.plane_mut(c);
        for oy in 0..oh {
            for (ox, ws) in wx.iter().enumerate() {
                plane[oy * ow + ox] = ws.iter().map(|&(sx, wgt)| wgt * rows[oy * r.width + sx]).sum();
            }
        }
    }
    out
}

fn resample_labels(l: &LabelRaster, oh: usize, ow: usize) -> LabelRaster {
    let near = |o: usize, src: usize, dst: usize| (((o as f64 + 0.5) * src as f64 / dst as f64) as usize).min(src - 1);
    let mut data = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        let sy = near(oy, l.height, oh);
        for ox in 0..ow {
            data.push(l.at(sy, near(ox, l.width, ow)));
        }
    }
    LabelRaster { height: oh, width: ow, data }
}

/// Resamples a tile whose ground sample distance changes by `num:den`
/// (e.g. 9:5 takes 5 cm pixels to 9 cm). Output dims are
/// `round(len * den / num)`; continuous layers are area-averaged and labels
/// take the nearest source pixel.
///
/// Output dims are not forced even: rounding to even would break the
/// inverse-ratio round trip for ratios like 9:5.
pub fn resample(tile: &RasterTile, num: u32, den: u32) -> Result<RasterTile, DataError> {
    if num == 0 || den == 0 {
        return Err(DataError::Invalid("resample ratio terms must be positive".into()));
    }
    let (h, w) = tile.dims();
    let (oh, ow) = (resampled_len(h, num, den), resampled_len(w, num, den));
    if oh == 0 || ow == 0 {
        return Err(DataError::Invalid(format!("resampling {h}x{w} by {num}:{den} gives an empty raster")));
    }
    if num == den {
        return Ok(tile.clone());
    }
    let r = |x: &Option<Raster>| x.as_ref().map(|x| resample_raster(x, oh, ow));
    Ok(RasterTile {
        id: tile.id.clone(),
        city: tile.city.clone(),
        spectral: r(&tile.spectral),
        dsm: r(&tile.dsm),
        dtm: r(&tile.dtm),
        ndsm: r(&tile.ndsm),
        labels: resample_labels(&tile.labels, oh, ow),
        gsd_cm: tile.gsd_cm * num as f32 / den as f32,
    })
}
