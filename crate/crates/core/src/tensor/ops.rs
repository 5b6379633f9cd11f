//! The SegNet layer set: 3x3 convolution, batch normalization, ReLU,
//! 2x2 max pooling with argmax indices and index unpooling, plus the few
//! elementwise helpers needed to form losses in tests.
//!
//! Convolution geometry is fixed: 3x3 kernel, stride 1, zero padding 1.
//! Pooling is fixed at 2x2 / stride 2 with first-maximum tie-breaking in
//! row-major scan order.

use rayon::prelude::*;

use crate::scalar::Scalar;

use super::error::{shape_err, TensorError};
use super::graph::{Graph, Op, Var};
use super::tensor::Tensor;

const K: usize = 3;
const KK: usize = K * K;

fn im2col<T: Scalar>(x: &[T], cin: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[(ci * KK + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], cin: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &cols[(ci * KK + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let (d, s) = match kx {
                        0 => (&mut dst[..w - 1], &src[1..]),
                        1 => (&mut dst[..], src),
                        _ => (&mut dst[1..], &src[..w - 1]),
                    };
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [b, cin, h, w] = x.dims4()?;
    let [cout, wcin, kh, kw] = weight.dims4()?;
    if wcin != cin {
        return Err(shape_err(
            "conv2d",
            format!("input has {cin} channels, weight expects {wcin}"),
        ));
    }
    if kh != K || kw != K {
        return Err(shape_err("conv2d", format!("kernel must be 3x3, got {kh}x{kw}")));
    }
    if bias.len() != cout {
        return Err(shape_err("conv2d", format!("bias length {} != {cout}", bias.len())));
    }
    if h == 0 || w == 0 {
        return Err(shape_err("conv2d", "empty spatial dims"));
    }
    let hw = h * w;
    let kdim = cin * KK;
    let mut out = vec![T::zero(); b * cout * hw];
    out.par_chunks_mut(cout * hw)
        .zip(x.data().par_chunks(cin * hw))
        .for_each_init(
            || vec![T::zero(); kdim * hw],
            |cols, (ob, xb)| {
                im2col(xb, cin, h, w, cols);
                for (co, plane) in ob.chunks_mut(hw).enumerate() {
                    plane.fill(bias.data()[co]);
                }
                T::gemm(
                    cout,
                    kdim,
                    hw,
                    T::one(),
                    (weight.data(), kdim as isize, 1),
                    (cols, hw as isize, 1),
                    T::one(),
                    (ob, hw as isize, 1),
                );
            },
        );
    Tensor::from_vec(&[b, cout, h, w], out)
}

struct Conv2dOp;

impl<T: Scalar> Op<T> for Conv2dOp {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let (x, weight) = (inputs[0], inputs[1]);
        let [b, cin, h, w] = x.dims4()?;
        let cout = weight.shape()[0];
        let hw = h * w;
        let kdim = cin * KK;

        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); b * cin * hw];
            dx.par_chunks_mut(cin * hw)
                .zip(gy.data().par_chunks(cout * hw))
                .for_each_init(
                    || vec![T::zero(); kdim * hw],
                    |dcols, (dxb, gb)| {
                        // dcols = W^T * dY, overwritten in full
                        T::gemm(
                            kdim,
                            cout,
                            hw,
                            T::one(),
                            (weight.data(), 1, kdim as isize),
                            (gb, hw as isize, 1),
                            T::zero(),
                            (dcols, hw as isize, 1),
                        );
                        col2im(dcols, cin, h, w, dxb);
                    },
                );
            Tensor::from_vec(x.shape(), dx)
        });

        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); cout * kdim];
            let mut cols = vec![T::zero(); kdim * hw];
            // Sequential over the batch so the reduction order is fixed.
            for (xb, gb) in x.data().chunks(cin * hw).zip(gy.data().chunks(cout * hw)) {
                im2col(xb, cin, h, w, &mut cols);
                T::gemm(
                    cout,
                    hw,
                    kdim,
                    T::one(),
                    (gb, hw as isize, 1),
                    (&cols, 1, hw as isize),
                    T::one(),
                    (&mut dw, kdim as isize, 1),
                );
            }
            Tensor::from_vec(weight.shape(), dw)
        });

        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); cout];
            for gb in gy.data().chunks(cout * hw) {
                for (d, plane) in db.iter_mut().zip(gb.chunks(hw)) {
                    *d += plane.iter().copied().sum::<T>();
                }
            }
            Tensor::from_vec(&[cout], db)
        });

        Ok(vec![dx.transpose()?, dw.transpose()?, db.transpose()?])
    }
}

/// 3x3 / stride 1 / zero-pad 1 convolution. `weight` is `[Cout, Cin, 3, 3]`,
/// `bias` is `[Cout]`.
pub fn conv2d<T: Scalar>(g: &mut Graph<T>, x: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
    let out = conv_forward(g.value(x), g.value(weight), g.value(bias))?;
    Ok(g.record(Box::new(Conv2dOp), &[x, weight, bias], out))
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub initialized: bool,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            initialized: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct BatchNormOp<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: BnMode,
}

impl<T: Scalar> Op<T> for BatchNormOp<T> {
    fn name(&self) -> &'static str {
        "batchnorm2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let [b, c, h, w] = inputs[0].dims4()?;
        let gamma = inputs[1].data();
        let hw = h * w;
        let m = T::of((b * hw) as f64);
        let gyd = gy.data();

        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * hw;
                for (&g, &x) in gyd[off..off + hw].iter().zip(&self.xhat[off..off + hw]) {
                    dbeta[ch] += g;
                    dgamma[ch] += g * x;
                }
            }
        }

        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); gyd.len()];
            for bi in 0..b {
                for ch in 0..c {
                    let off = (bi * c + ch) * hw;
                    let k = gamma[ch] * self.inv_std[ch];
                    for i in off..off + hw {
                        dx[i] = match self.mode {
                            BnMode::Eval => k * gyd[i],
                            BnMode::Train => k * (gyd[i] - (dbeta[ch] + self.xhat[i] * dgamma[ch]) / m),
                        };
                    }
                }
            }
            dx
        });

        Ok(vec![
            dx.map(|d| Tensor::from_vec(inputs[0].shape(), d)).transpose()?,
            needs[1].then(|| Tensor::from_vec(&[c], dgamma)).transpose()?,
            needs[2].then(|| Tensor::from_vec(&[c], dbeta)).transpose()?,
        ])
    }
}

/// Batch normalization over `[B, C, H, W]`. Train mode normalizes with the
/// batch statistics and folds them into `stats` (momentum 0.1, unbiased
/// variance); eval mode normalizes with `stats` and fails if they were
/// never initialized.
pub fn batchnorm2d<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: &mut RunningStats<T>,
    mode: BnMode,
    eps: T,
) -> Result<Var, TensorError> {
    let xt = g.value(x);
    let [b, c, h, w] = xt.dims4()?;
    let (gm, bt) = (g.value(gamma).data(), g.value(beta).data());
    if gm.len() != c || bt.len() != c || stats.mean.len() != c {
        return Err(shape_err(
            "batchnorm2d",
            format!("{c} channels vs gamma {} beta {}", gm.len(), bt.len()),
        ));
    }
    if eps <= T::zero() {
        return Err(shape_err("batchnorm2d", "eps must be positive"));
    }
    let hw = h * w;
    let n = b * hw;
    let xd = xt.data();

    let (mean, var) = match mode {
        BnMode::Eval => {
            if !stats.initialized {
                return Err(TensorError::UninitializedRunningStats);
            }
            (stats.mean.clone(), stats.var.clone())
        }
        BnMode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut s = T::zero();
                for bi in 0..b {
                    let off = (bi * c + ch) * hw;
                    s += xd[off..off + hw].iter().copied().sum::<T>();
                }
                let mu = s / T::of(n as f64);
                let mut ss = T::zero();
                for bi in 0..b {
                    let off = (bi * c + ch) * hw;
                    ss += xd[off..off + hw].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                }
                mean[ch] = mu;
                var[ch] = ss / T::of(n as f64);
            }
            let mom = T::of(BN_MOMENTUM);
            let unbias = if n > 1 {
                T::of(n as f64 / (n - 1) as f64)
            } else {
                T::one()
            };
            for ch in 0..c {
                stats.mean[ch] = (T::one() - mom) * stats.mean[ch] + mom * mean[ch];
                stats.var[ch] = (T::one() - mom) * stats.var[ch] + mom * var[ch] * unbias;
            }
            stats.initialized = true;
            (mean, var)
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = vec![T::zero(); xd.len()];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * hw;
            for i in off..off + hw {
                let v = (xd[i] - mean[ch]) * inv_std[ch];
                xhat[i] = v;
                out[i] = gm[ch] * v + bt[ch];
            }
        }
    }
    let out = Tensor::from_vec(xt.shape(), out)?;
    Ok(g.record(Box::new(BatchNormOp { xhat, inv_std, mode }), &[x, gamma, beta], out))
}

struct ReluOp;

impl<T: Scalar> Op<T> for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let d = output
            .data()
            .iter()
            .zip(gy.data())
            .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
            .collect();
        Ok(vec![Some(Tensor::from_vec(output.shape(), d)?)])
    }
}

pub fn relu<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var, TensorError> {
    let out = g.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
    Ok(g.record(Box::new(ReluOp), &[x], out))
}

/// Argmax positions recorded by [`maxpool_argmax`].
///
/// `indices[k]` is the plane-local flat index (`y * W + x`) into the
/// pre-pool map of pooled element `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    /// Shape of the pre-pool input `[B, C, H, W]`.
    pub input_shape: [usize; 4],
    pub indices: Vec<u32>,
}

impl PoolIndices {
    pub fn pooled_shape(&self) -> [usize; 4] {
        let [b, c, h, w] = self.input_shape;
        [b, c, h / 2, w / 2]
    }

    /// Checks that every index addresses a cell of its own 2x2 window.
    pub fn validate(&self) -> Result<(), TensorError> {
        let [b, c, h, w] = self.input_shape;
        let (ph, pw) = (h / 2, w / 2);
        if self.indices.len() != b * c * ph * pw {
            return Err(shape_err("pool_indices", "index count does not match pooled shape"));
        }
        for (k, &idx) in self.indices.iter().enumerate() {
            let cell = k % (ph * pw);
            let (py, px) = (cell / pw, cell % pw);
            let (iy, ix) = (idx as usize / w.max(1), idx as usize % w.max(1));
            if idx as usize >= h * w || iy / 2 != py || ix / 2 != px {
                return Err(TensorError::CorruptPoolIndex { cell: k, index: idx });
            }
        }
        Ok(())
    }
}

struct MaxPoolOp {
    indices: PoolIndices,
}

impl<T: Scalar> Op<T> for MaxPoolOp {
    fn name(&self) -> &'static str {
        "maxpool_argmax"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let [_, _, h, w] = self.indices.input_shape;
        let plane_in = h * w;
        let plane_out = plane_in / 4;
        let mut dx = vec![T::zero(); inputs[0].len()];
        for (k, (&idx, &g)) in self.indices.indices.iter().zip(gy.data()).enumerate() {
            dx[(k / plane_out) * plane_in + idx as usize] += g;
        }
        Ok(vec![Some(Tensor::from_vec(inputs[0].shape(), dx)?)])
    }
}

/// 2x2 / stride 2 max pooling that also returns the argmax of every window.
/// Ties resolve to the first maximum in row-major scan order.
pub fn maxpool_argmax<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<(Var, PoolIndices), TensorError> {
    let (out, indices) = maxpool_forward(g.value(x))?;
    let var = g.record(
        Box::new(MaxPoolOp {
            indices: indices.clone(),
        }),
        &[x],
        out,
    );
    Ok((var, indices))
}

/// Graph-free pooling kernel, shared by the op and by tests.
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), TensorError> {
    let [b, c, h, w] = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(shape_err(
            "maxpool_argmax",
            format!("spatial dims must be even and nonzero, got {h}x{w}"),
        ));
    }
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * ph * pw);
    let mut idx = Vec::with_capacity(b * c * ph * pw);
    for plane in x.data().chunks(h * w) {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = (py * 2) * w + px * 2;
                for cand in [
                    (py * 2) * w + px * 2 + 1,
                    (py * 2 + 1) * w + px * 2,
                    (py * 2 + 1) * w + px * 2 + 1,
                ] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                out.push(plane[best]);
                idx.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, c, ph, pw], out)?,
        PoolIndices {
            input_shape: [b, c, h, w],
            indices: idx,
        },
    ))
}

struct MaxUnpoolOp {
    indices: PoolIndices,
}

impl<T: Scalar> Op<T> for MaxUnpoolOp {
    fn name(&self) -> &'static str {
        "maxunpool"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let [_, _, h, w] = self.indices.input_shape;
        let plane_in = h * w;
        let plane_out = plane_in / 4;
        let dx = self
            .indices
            .indices
            .iter()
            .enumerate()
            .map(|(k, &idx)| gy.data()[(k / plane_out) * plane_in + idx as usize])
            .collect();
        Ok(vec![Some(Tensor::from_vec(inputs[0].shape(), dx)?)])
    }
}

/// Places each input value at its recorded argmax position in a map of the
/// pre-pool shape; every other cell is zero.
pub fn maxunpool<T: Scalar>(g: &mut Graph<T>, x: Var, indices: &PoolIndices) -> Result<Var, TensorError> {
    let out = maxunpool_forward(g.value(x), indices)?;
    Ok(g.record(
        Box::new(MaxUnpoolOp {
            indices: indices.clone(),
        }),
        &[x],
        out,
    ))
}

pub fn maxunpool_forward<T: Scalar>(x: &Tensor<T>, indices: &PoolIndices) -> Result<Tensor<T>, TensorError> {
    let dims = x.dims4()?;
    if dims != indices.pooled_shape() {
        return Err(shape_err(
            "maxunpool",
            format!(
                "input {dims:?} does not match pooled shape {:?}",
                indices.pooled_shape()
            ),
        ));
    }
    indices.validate()?;
    let [b, c, h, w] = indices.input_shape;
    let plane_in = h * w;
    let plane_out = plane_in / 4;
    let mut out = vec![T::zero(); b * c * plane_in];
    for (k, (&idx, &v)) in indices.indices.iter().zip(x.data()).enumerate() {
        out[(k / plane_out) * plane_in + idx as usize] = v;
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

struct MulOp;

impl<T: Scalar> Op<T> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let prod = |other: &Tensor<T>| {
            let d = other.data().iter().zip(gy.data()).map(|(&a, &g)| a * g).collect();
            Tensor::from_vec(other.shape(), d)
        };
        Ok(vec![
            needs[0].then(|| prod(inputs[1])).transpose()?,
            needs[1].then(|| prod(inputs[0])).transpose()?,
        ])
    }
}

/// Elementwise product of equally shaped tensors.
pub fn mul<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, TensorError> {
    let (at, bt) = (g.value(a), g.value(b));
    if at.shape() != bt.shape() {
        return Err(shape_err("mul", format!("{:?} vs {:?}", at.shape(), bt.shape())));
    }
    let d = at.data().iter().zip(bt.data()).map(|(&x, &y)| x * y).collect();
    let out = Tensor::from_vec(at.shape(), d)?;
    Ok(g.record(Box::new(MulOp), &[a, b], out))
}

struct AddOp;

impl<T: Scalar> Op<T> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        Ok(vec![needs[0].then(|| gy.clone()), needs[1].then(|| gy.clone())])
    }
}

/// Elementwise sum of equally shaped tensors.
pub fn add<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, TensorError> {
    let (at, bt) = (g.value(a), g.value(b));
    if at.shape() != bt.shape() {
        return Err(shape_err("add", format!("{:?} vs {:?}", at.shape(), bt.shape())));
    }
    let d = at.data().iter().zip(bt.data()).map(|(&x, &y)| x + y).collect();
    let out = Tensor::from_vec(at.shape(), d)?;
    Ok(g.record(Box::new(AddOp), &[a, b], out))
}

struct SumOp;

impl<T: Scalar> Op<T> for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        gy: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        Ok(vec![Some(Tensor::full(inputs[0].shape(), gy.data()[0]))])
    }
}

/// Sum of all elements, as a one-element tensor.
pub fn sum<T: Scalar>(g: &mut Graph<T>, x: Var) -> Var {
    let out = Tensor::scalar(g.value(x).sum());
    g.record(Box::new(SumOp), &[x], out)
}
