//! Weighted pixel-wise negative log likelihood, both as plain functions on
//! probability rasters and as differentiable graph operations on logits.

use crate::data::LabelRaster;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Op, Tensor, TensorError, Var};

use super::weights::ClassWeights;
use super::NetError;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

/// Per-pixel class distribution, `[N, H, W]` channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityRaster {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ProbabilityRaster {
    pub fn new(classes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, NetError> {
        if data.len() != classes * height * width {
            return Err(NetError::InvalidInput(format!(
                "{} probabilities for a {classes}x{height}x{width} raster",
                data.len()
            )));
        }
        Ok(Self { classes, height, width, data })
    }

    pub fn plane(&self, k: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, y: usize, x: usize) -> f64 {
        self.data[(k * self.height + y) * self.width + x]
    }

    /// Most probable class per pixel; ties go to the smaller class id.
    pub fn argmax(&self) -> LabelRaster {
        let n = self.height * self.width;
        let data = (0..n)
            .map(|i| {
                let mut best = 0;
                for k in 1..self.classes {
                    if self.data[k * n + i] > self.data[best * n + i] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        LabelRaster { height: self.height, width: self.width, data }
    }
}

fn clamp_log(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS).ln()
}

fn check_dims(p: &ProbabilityRaster, y: &LabelRaster) -> Result<(), NetError> {
    if (p.height, p.width) != y.dims() {
        return Err(NetError::InvalidInput(format!(
            "probabilities are {}x{}, labels {}x{}",
            p.height, p.width, y.height, y.width
        )));
    }
    Ok(())
}

/// Weighted binary NLL summed over pixels. `p` holds either the positive
/// class probability alone (one plane) or both class planes, in which case
/// plane 1 is used.
pub fn loss_weighted_binary(p: &ProbabilityRaster, y: &LabelRaster, w: &ClassWeights) -> Result<f64, NetError> {
    check_dims(p, y)?;
    if !(p.classes == 1 || p.classes == 2) || w.num_classes() != 2 {
        return Err(NetError::InvalidInput("binary loss needs one or two probability planes and two weights".into()));
    }
    let pos = p.plane(p.classes - 1);
    let mut total = 0.0;
    for (&pi, &yi) in pos.iter().zip(&y.data) {
        let nll = match yi {
            0 => -clamp_log(1.0 - pi),
            1 => -clamp_log(pi),
            other => return Err(NetError::InvalidInput(format!("binary label {other}"))),
        };
        total += w.weights[yi as usize] * nll;
    }
    Ok(total)
}

/// Weighted multi-class NLL summed over pixels.
pub fn loss_weighted_multiclass(p: &ProbabilityRaster, y: &LabelRaster, w: &ClassWeights) -> Result<f64, NetError> {
    check_dims(p, y)?;
    if w.num_classes() != p.classes {
        return Err(NetError::InvalidInput(format!("{} weights for {} classes", w.num_classes(), p.classes)));
    }
    let n = p.height * p.width;
    let mut total = 0.0;
    for (i, &c) in y.data.iter().enumerate() {
        let c = c as usize;
        if c >= p.classes {
            return Err(NetError::InvalidInput(format!("label {c} outside {} classes", p.classes)));
        }
        total -= w.weights[c] * clamp_log(p.data[c * n + i]);
    }
    Ok(total)
}

/// Softmax over the class axis of `[B, N, H, W]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [b, n, h, w] = logits.dims4()?;
    let plane = h * w;
    let z = logits.data();
    let mut out = vec![T::zero(); z.len()];
    for bi in 0..b {
        let base = bi * n * plane;
        for i in 0..plane {
            let mut m = T::neg_infinity();
            for k in 0..n {
                m = m.max(z[base + k * plane + i]);
            }
            let mut s = T::zero();
            for k in 0..n {
                let e = (z[base + k * plane + i] - m).exp();
                out[base + k * plane + i] = e;
                s += e;
            }
            for k in 0..n {
                out[base + k * plane + i] /= s;
            }
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// How per-pixel terms are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    /// Sum divided by the number of labelled pixels.
    Mean,
    /// Sum divided by the summed weights of the labelled pixels.
    WeightedMean,
}

fn check_labels<T: Scalar>(logits: &Tensor<T>, labels: &[u8], w: &ClassWeights) -> Result<[usize; 4], NetError> {
    let [b, n, h, wd] = logits.dims4()?;
    if labels.len() != b * h * wd {
        return Err(NetError::InvalidInput(format!("{} labels for {b}x{h}x{wd} pixels", labels.len())));
    }
    if w.num_classes() != n {
        return Err(NetError::InvalidInput(format!("{} weights for {n} classes", w.num_classes())));
    }
    if let Some(&c) = labels.iter().find(|&&c| c as usize >= n) {
        return Err(NetError::InvalidInput(format!("label {c} outside {n} classes")));
    }
    Ok([b, n, h, wd])
}

fn scale(r: Reduction, labels: &[u8], w: &ClassWeights) -> f64 {
    match r {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / labels.len() as f64,
        Reduction::WeightedMean => {
            let total: f64 = labels.iter().map(|&c| w.weights[c as usize]).sum();
            if total > 0.0 {
                1.0 / total
            } else {
                0.0
            }
        }
    }
}

struct MulticlassNll<T> {
    probs: Tensor<T>,
    labels: Vec<u8>,
    weights: Vec<T>,
    scale: T,
}

impl<T: Scalar> Op<T> for MulticlassNll<T> {
    fn name(&self) -> &'static str {
        "weighted_nll"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let [_, n, h, w] = self.probs.dims4()?;
        let plane = h * w;
        let p = self.probs.data();
        let mut grad = vec![T::zero(); p.len()];
        let (eps, g0) = (T::of(EPS), gy.data()[0] * self.scale);
        for (pix, &c) in self.labels.iter().enumerate() {
            let (bi, i) = (pix / plane, pix % plane);
            let base = bi * n * plane + i;
            let pc = p[base + c as usize * plane];
            // Inside the clamp the log has zero slope.
            if pc < eps || pc > T::one() - eps {
                continue;
            }
            let wc = self.weights[c as usize] * g0;
            for k in 0..n {
                let delta = if k == c as usize { T::one() } else { T::zero() };
                grad[base + k * plane] = wc * (p[base + k * plane] - delta);
            }
        }
        Ok(vec![Some(Tensor::from_vec(self.probs.shape(), grad)?)])
    }
}

/// Softmax followed by the weighted multi-class NLL; returns a scalar.
pub fn softmax_weighted_nll<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    labels: &[u8],
    w: &ClassWeights,
    reduction: Reduction,
) -> Result<Var, NetError> {
    let [_, n, h, wd] = check_labels(g.value(logits), labels, w)?;
    let probs = softmax(g.value(logits))?;
    let plane = h * wd;
    let p = probs.data();
    let mut total = 0.0;
    for (pix, &c) in labels.iter().enumerate() {
        let (bi, i) = (pix / plane, pix % plane);
        total -= w.weights[c as usize] * clamp_log(p[bi * n * plane + c as usize * plane + i].as_f64());
    }
    let s = scale(reduction, labels, w);
    let op = MulticlassNll {
        probs,
        labels: labels.to_vec(),
        weights: w.weights.iter().map(|&v| T::of(v)).collect(),
        scale: T::of(s),
    };
    Ok(g.record(Box::new(op), &[logits], Tensor::scalar(T::of(total * s))))
}

struct BinaryNll<T> {
    /// Positive-class probability per pixel.
    p: Vec<T>,
    shape: Vec<usize>,
    labels: Vec<u8>,
    weights: [T; 2],
    scale: T,
}

impl<T: Scalar> Op<T> for BinaryNll<T> {
    fn name(&self) -> &'static str {
        "weighted_binary_nll"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let plane = self.shape[2] * self.shape[3];
        let mut grad = vec![T::zero(); self.p.len() * 2];
        let (eps, g0) = (T::of(EPS), gy.data()[0] * self.scale);
        for (pix, (&p, &y)) in self.p.iter().zip(&self.labels).enumerate() {
            if p < eps || p > T::one() - eps {
                continue;
            }
            // d/dd of the NLL with p = sigmoid(d), d = z1 - z0.
            let dd = self.weights[y as usize] * g0 * if y == 1 { p - T::one() } else { p };
            let (bi, i) = (pix / plane, pix % plane);
            grad[bi * 2 * plane + i] = -dd;
            grad[bi * 2 * plane + plane + i] = dd;
        }
        Ok(vec![Some(Tensor::from_vec(&self.shape, grad)?)])
    }
}

/// Weighted binary NLL on two-class logits with `p = sigmoid(z1 - z0)`.
pub fn binary_weighted_nll<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    labels: &[u8],
    w: &ClassWeights,
    reduction: Reduction,
) -> Result<Var, NetError> {
    let [_, n, h, wd] = check_labels(g.value(logits), labels, w)?;
    if n != 2 {
        return Err(NetError::InvalidInput(format!("binary loss on {n}-class logits")));
    }
    let plane = h * wd;
    let z = g.value(logits).data();
    let mut p = Vec::with_capacity(labels.len());
    let mut total = 0.0;
    for (pix, &y) in labels.iter().enumerate() {
        let (bi, i) = (pix / plane, pix % plane);
        let d = (z[bi * 2 * plane + plane + i] - z[bi * 2 * plane + i]).as_f64();
        let pi = 1.0 / (1.0 + (-d).exp());
        let nll = if y == 1 { -clamp_log(pi) } else { -clamp_log(1.0 - pi) };
        total += w.weights[y as usize] * nll;
        p.push(T::of(pi));
    }
    let s = scale(reduction, labels, w);
    let op = BinaryNll {
        p,
        shape: g.value(logits).shape().to_vec(),
        labels: labels.to_vec(),
        weights: [T::of(w.weights[0]), T::of(w.weights[1])],
        scale: T::of(s),
    };
    Ok(g.record(Box::new(op), &[logits], Tensor::scalar(T::of(total * s))))
}
