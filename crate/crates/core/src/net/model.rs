use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{ChannelMode, NormStats};
use crate::scalar::Scalar;
use crate::tensor::ops::{self, BN_EPS};
use crate::tensor::{BnMode, Graph, ParamId, ParamStore, PoolIndices, RunningStats, Tensor, Var};

use super::spec::{ConvLayerSpec, NetworkSpec};
use super::NetError;

#[derive(Clone, Debug)]
pub(crate) struct BnLayer<T> {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvLayer<T> {
    pub spec: ConvLayerSpec,
    pub weight: ParamId,
    pub bias: ParamId,
    pub bn: Option<BnLayer<T>>,
}

/// How raw tiles are turned into network input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputConfig {
    pub mode: ChannelMode,
    pub norm: NormStats,
}

/// A SegNet-family network with its learned parameters and batch-norm
/// running statistics.
#[derive(Clone, Debug)]
pub struct NetworkModel<T: Scalar> {
    spec: NetworkSpec,
    pub(crate) params: ParamStore<T>,
    pub(crate) encoder: Vec<Vec<ConvLayer<T>>>,
    pub(crate) decoder: Vec<Vec<ConvLayer<T>>>,
    pub input: InputConfig,
}

impl<T: Scalar> NetworkModel<T> {
    /// Builds a model with He fan-in normal kernels, zero biases and unit
    /// batch-norm scales.
    pub fn build(spec: NetworkSpec, input: InputConfig, seed: u64) -> Result<Self, NetError> {
        if input.mode.channels() != spec.in_channels {
            return Err(NetError::InvalidSpec(format!(
                "channel mode {} supplies {} channels, network expects {}",
                input.mode,
                input.mode.channels(),
                spec.in_channels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut counter = 0usize;
        let mut make = |l: ConvLayerSpec, params: &mut ParamStore<T>| {
            let fan_in = (l.in_channels * 9) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let n = l.out_channels * l.in_channels * 9;
            let w: Vec<T> = (0..n).map(|_| T::of(normal.sample(&mut rng))).collect();
            let i = counter;
            counter += 1;
            let weight = params.add(
                format!("conv{i}.weight"),
                Tensor::from_vec(&[l.out_channels, l.in_channels, 3, 3], w).expect("sized"),
            );
            let bias = params.add(format!("conv{i}.bias"), Tensor::zeros(&[l.out_channels]));
            let bn = l.bn_relu.then(|| BnLayer {
                gamma: params.add(format!("bn{i}.gamma"), Tensor::full(&[l.out_channels], T::one())),
                beta: params.add(format!("bn{i}.beta"), Tensor::zeros(&[l.out_channels])),
                stats: RunningStats::new(l.out_channels),
            });
            ConvLayer { spec: l, weight, bias, bn }
        };
        let encoder = spec
            .encoder_layers()
            .into_iter()
            .map(|b| b.into_iter().map(|l| make(l, &mut params)).collect())
            .collect();
        let decoder = spec
            .decoder_layers()
            .into_iter()
            .map(|b| b.into_iter().map(|l| make(l, &mut params)).collect())
            .collect();
        Ok(Self { spec, params, encoder, decoder, input })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Every learnable scalar: kernels, biases and batch-norm scale/shift.
    pub fn count_parameters(&self) -> usize {
        self.params.numel()
    }

    /// Convolution kernel weights only (the figure quoted for the published
    /// SegNet / SegNet Lite budgets).
    pub fn count_kernel_weights(&self) -> usize {
        self.layers().map(|l| self.params.get(l.weight).tensor.len()).sum()
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &ConvLayer<T>> {
        self.encoder.iter().chain(&self.decoder).flatten()
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer<T>> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten()
    }

    /// Records the forward pass of a `[B, C, H, W]` batch and returns the
    /// class logits `[B, N, H, W]`. H and W must be multiples of 32.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: BnMode) -> Result<Var, NetError> {
        let [_, c, h, w] = g.value(x).dims4()?;
        let div = self.spec.downsampling();
        if c != self.spec.in_channels {
            return Err(NetError::InvalidInput(format!("input has {c} channels, model expects {}", self.spec.in_channels)));
        }
        if h % div != 0 || w % div != 0 || h == 0 || w == 0 {
            return Err(NetError::InvalidInput(format!("spatial dims {h}x{w} must be nonzero multiples of {div}")));
        }
        let params = &self.params;
        let mut cur = x;
        let mut pools: Vec<PoolIndices> = Vec::with_capacity(self.encoder.len());
        for block in &mut self.encoder {
            for layer in block.iter_mut() {
                cur = apply_layer(g, params, layer, cur, mode)?;
            }
            let (pooled, idx) = ops::maxpool_argmax(g, cur)?;
            pools.push(idx);
            cur = pooled;
        }
        for block in &mut self.decoder {
            let idx = pools.pop().expect("one pool per encoder block");
            cur = ops::maxunpool(g, cur, &idx)?;
            for layer in block.iter_mut() {
                cur = apply_layer(g, params, layer, cur, mode)?;
            }
        }
        Ok(cur)
    }

    /// Eval-mode forward pass without keeping a graph around.
    pub fn infer(&mut self, x: Tensor<T>) -> Result<Tensor<T>, NetError> {
        let mut g = Graph::new();
        let xv = g.leaf(x);
        let y = self.forward(&mut g, xv, BnMode::Eval)?;
        Ok(g.value(y).clone())
    }

    /// Converts the model to another scalar type.
    pub fn cast<U: Scalar>(&self) -> NetworkModel<U> {
        let mut params = ParamStore::new();
        for p in self.params.iter() {
            params.add(p.name.clone(), p.tensor.cast());
        }
        let conv = |l: &ConvLayer<T>| ConvLayer {
            spec: l.spec,
            weight: l.weight,
            bias: l.bias,
            bn: l.bn.as_ref().map(|b| BnLayer {
                gamma: b.gamma,
                beta: b.beta,
                stats: RunningStats {
                    mean: b.stats.mean.iter().map(|v| U::of(v.as_f64())).collect(),
                    var: b.stats.var.iter().map(|v| U::of(v.as_f64())).collect(),
                    initialized: b.stats.initialized,
                },
            }),
        };
        NetworkModel {
            spec: self.spec.clone(),
            params,
            encoder: self.encoder.iter().map(|b| b.iter().map(conv).collect()).collect(),
            decoder: self.decoder.iter().map(|b| b.iter().map(conv).collect()).collect(),
            input: self.input,
        }
    }
}

fn apply_layer<T: Scalar>(
    g: &mut Graph<T>,
    params: &ParamStore<T>,
    layer: &mut ConvLayer<T>,
    x: Var,
    mode: BnMode,
) -> Result<Var, NetError> {
    let w = g.param(params, layer.weight);
    let b = g.param(params, layer.bias);
    let y = ops::conv2d(g, x, w, b)?;
    match &mut layer.bn {
        None => Ok(y),
        Some(bn) => {
            let gamma = g.param(params, bn.gamma);
            let beta = g.param(params, bn.beta);
            let z = ops::batchnorm2d(g, y, gamma, beta, &mut bn.stats, mode, T::of(BN_EPS))?;
            Ok(ops::relu(g, z)?)
        }
    }
}
