use crate::data::{fuse_channels, LabelRaster, RasterTile};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::loss::{softmax, ProbabilityRaster};
use super::model::NetworkModel;
use super::NetError;

/// Windows run through the network together.
const PREDICT_BATCH: usize = 4;

/// Mirror index without repeating the edge pixel.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let m = i % (2 * n - 2);
    if m < n {
        m
    } else {
        2 * n - 2 - m
    }
}

/// Window origins covering `len` pixels with the given stride; the last
/// window is flush with the end.
fn origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    while out[out.len() - 1] + window < len {
        out.push((out[out.len() - 1] + stride).min(len - window));
    }
    out
}

/// Predicts a whole tile with a sliding `window`; neighbouring windows
/// overlap by the fraction `overlap` and their probabilities are averaged.
/// Tiles smaller than the window are reflect-padded.
pub fn predict_raster<T: Scalar>(
    model: &mut NetworkModel<T>,
    tile: &RasterTile,
    window: usize,
    overlap: f64,
) -> Result<(ProbabilityRaster, LabelRaster), NetError> {
    let div = model.spec().downsampling();
    if window == 0 || !window.is_multiple_of(div) {
        return Err(NetError::InvalidInput(format!("prediction window {window} is not a multiple of {div}")));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(NetError::InvalidInput(format!("overlap {overlap} outside [0, 1)")));
    }
    let input = model.input;
    let x: Tensor<T> = fuse_channels(tile, input.mode, &input.norm).map_err(|e| NetError::InvalidInput(e.to_string()))?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ph, pw) = (h.max(window), w.max(window));
    let padded = if (ph, pw) == (h, w) {
        x
    } else {
        let src = x.data();
        let mut d = Vec::with_capacity(c * ph * pw);
        for ch in 0..c {
            for y in 0..ph {
                let row = ch * h * w + reflect(y, h) * w;
                d.extend((0..pw).map(|xx| src[row + reflect(xx, w)]));
            }
        }
        Tensor::from_vec(&[c, ph, pw], d)?
    };

    let stride = ((window as f64 * (1.0 - overlap)).round() as usize).max(1);
    let cells: Vec<(usize, usize)> = origins(ph, window, stride)
        .into_iter()
        .flat_map(|y| origins(pw, window, stride).into_iter().map(move |x| (y, x)))
        .collect();
    let n = model.spec().num_classes;
    let mut acc = vec![0f64; n * ph * pw];
    let mut hits = vec![0u32; ph * pw];
    for chunk in cells.chunks(PREDICT_BATCH) {
        let crops = chunk.iter().map(|&(y, x)| padded.crop3(y, x, window, window)).collect::<Result<Vec<_>, _>>()?;
        let probs = softmax(&model.infer(Tensor::stack(&crops)?)?)?;
        let p = probs.data();
        let plane = window * window;
        for (b, &(y0, x0)) in chunk.iter().enumerate() {
            for yy in 0..window {
                for xx in 0..window {
                    let dst = (y0 + yy) * pw + x0 + xx;
                    hits[dst] += 1;
                    for k in 0..n {
                        acc[k * ph * pw + dst] += p[(b * n + k) * plane + yy * window + xx].as_f64();
                    }
                }
            }
        }
    }

    let mut data = vec![0f64; n * h * w];
    for y in 0..h {
        for x in 0..w {
            let src = y * pw + x;
            let s: f64 = (0..n).map(|k| acc[k * ph * pw + src]).sum();
            for k in 0..n {
                data[k * h * w + y * w + x] = acc[k * ph * pw + src] / s;
            }
        }
    }
    let probs = ProbabilityRaster::new(n, h, w, data)?;
    let labels = probs.argmax();
    Ok((probs, labels))
}
