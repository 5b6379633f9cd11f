use log::{debug, info};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{fuse_channels, RasterTile};
use crate::scalar::Scalar;
use crate::tensor::{sgd_step, BnMode, Graph, Tensor};

use super::loss::{binary_weighted_nll, softmax_weighted_nll, Reduction};
use super::model::NetworkModel;
use super::weights::ClassWeights;
use super::NetError;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Side of the square training crops; clipped to the largest multiple
    /// of 32 that fits every tile.
    pub window: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Defaults to enough crops per epoch to cover the data once.
    pub steps_per_epoch: Option<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Random horizontal/vertical flips of each crop.
    pub flip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { window: 64, batch_size: 8, epochs: 10, steps_per_epoch: None, lr: 0.01, momentum: 0.9, seed: 0, flip: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.window < 16 || !self.window.is_multiple_of(2) {
            return Err(NetError::InvalidInput(format!("window {} must be even and at least 16", self.window)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.steps_per_epoch == Some(0) {
            return Err(NetError::InvalidInput("batch size, epochs and steps must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::InvalidInput(format!("lr {} / momentum {} out of range", self.lr, self.momentum)));
        }
        Ok(())
    }

    /// Learning rate for `epoch`: halved after each third of the run.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * 0.5f64.powi((3 * epoch / self.epochs) as i32)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Weight-normalized batch loss averaged over each epoch's steps.
    pub epoch_loss: Vec<f64>,
    pub step_loss: Vec<f64>,
    pub window: usize,
    pub steps_per_epoch: usize,
}

/// Trains `model` in place on random crops of `tiles`.
///
/// The objective is the summed weighted NLL of a batch divided by the
/// batch's summed pixel weights, which keeps the step size independent of
/// window size, batch size and the magnitude of the class weights.
pub fn train_network<T: Scalar>(
    model: &mut NetworkModel<T>,
    tiles: &[RasterTile],
    weights: &ClassWeights,
    cfg: &TrainConfig,
) -> Result<TrainHistory, NetError> {
    cfg.validate()?;
    let n_classes = model.spec().num_classes;
    if weights.num_classes() != n_classes {
        return Err(NetError::InvalidInput(format!("{} class weights for {n_classes} classes", weights.num_classes())));
    }
    if tiles.is_empty() {
        return Err(NetError::InvalidInput("no training tiles".into()));
    }
    let div = model.spec().downsampling();
    let min_side = tiles.iter().map(|t| t.dims().0.min(t.dims().1)).min().unwrap_or(0);
    let window = (cfg.window.min(min_side) / div) * div;
    if window == 0 {
        return Err(NetError::InvalidInput(format!("tiles of side {min_side} are smaller than one {div}px window")));
    }
    let input = model.input;
    let inputs: Vec<Tensor<T>> = tiles
        .iter()
        .map(|t| fuse_channels(t, input.mode, &input.norm))
        .collect::<Result<_, _>>()
        .map_err(|e| NetError::InvalidInput(e.to_string()))?;
    let total_pixels: usize = tiles.iter().map(|t| t.dims().0 * t.dims().1).sum();
    let steps = cfg.steps_per_epoch.unwrap_or_else(|| total_pixels.div_ceil(window * window * cfg.batch_size));
    let picker = WeightedIndex::new(tiles.iter().map(|t| t.dims().0 * t.dims().1)).expect("nonempty tiles");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory { window, steps_per_epoch: steps, ..Default::default() };
    info!(
        "training {} ({} mode) on {} tiles: window {window}, batch {}, {} epochs x {steps} steps",
        model.spec().architecture,
        input.mode,
        tiles.len(),
        cfg.batch_size,
        cfg.epochs
    );

    for epoch in 0..cfg.epochs {
        let lr = T::of(cfg.lr_at(epoch));
        let mut sum = 0.0;
        for step in 0..steps {
            let mut xs = Vec::with_capacity(cfg.batch_size);
            let mut ys = Vec::with_capacity(cfg.batch_size * window * window);
            for _ in 0..cfg.batch_size {
                let ti = picker.sample(&mut rng);
                let (h, w) = tiles[ti].dims();
                let (y0, x0) = (rng.gen_range(0..=h - window), rng.gen_range(0..=w - window));
                let mut x = inputs[ti].crop3(y0, x0, window, window)?;
                let mut lab = tiles[ti].labels.crop(y0, x0, window, window).data;
                if cfg.flip {
                    let (fy, fx) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
                    flip(x.data_mut(), window, fy, fx);
                    flip(&mut lab, window, fy, fx);
                }
                xs.push(x);
                ys.extend(lab);
            }
            let mut g = Graph::new();
            let xv = g.leaf(Tensor::stack(&xs)?);
            let logits = model.forward(&mut g, xv, BnMode::Train)?;
            let loss = if n_classes == 2 {
                binary_weighted_nll(&mut g, logits, &ys, weights, Reduction::WeightedMean)?
            } else {
                softmax_weighted_nll(&mut g, logits, &ys, weights, Reduction::WeightedMean)?
            };
            let value = g.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(NetError::NonFinite { epoch, step, detail: format!("loss {value}") });
            }
            g.backward(loss, model.params_mut())?;
            sgd_step(model.params_mut(), lr, T::of(cfg.momentum))
                .map_err(|e| NetError::NonFinite { epoch, step, detail: e.to_string() })?;
            debug!("epoch {epoch} step {step}: loss {value:.5}");
            history.step_loss.push(value);
            sum += value;
        }
        let mean = sum / steps as f64;
        info!("epoch {}/{}: mean loss {mean:.5} (lr {})", epoch + 1, cfg.epochs, cfg.lr_at(epoch));
        history.epoch_loss.push(mean);
    }
    Ok(history)
}

/// Flips every `side x side` plane of `data` in place.
fn flip<V>(data: &mut [V], side: usize, vertical: bool, horizontal: bool) {
    for plane in data.chunks_mut(side * side) {
        if vertical {
            for y in 0..side / 2 {
                let (top, bottom) = plane.split_at_mut((side - 1 - y) * side);
                top[y * side..(y + 1) * side].swap_with_slice(&mut bottom[..side]);
            }
        }
        if horizontal {
            for row in plane.chunks_mut(side) {
                row.reverse();
            }
        }
    }
}
