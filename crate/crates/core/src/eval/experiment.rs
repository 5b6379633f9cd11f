use std::fmt;
use std::time::Instant;

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{crop_fraction, ChannelMode, DatasetManifest, NormStats, RasterTile, Split};
use crate::net::{
    compute_class_weights, predict_raster, train_network, AbsentClassPolicy, InputConfig, NetworkModel, NetworkSpec,
};
use crate::svm::{
    downselect, downselect_fraction, sample_features, train_one_vs_one, OvoConfig, OvoModel, PixelPool,
};

use super::config::{Classifier, ExperimentConfig, Task};
use super::metrics::{balanced_metrics, ConfusionMatrix, MetricsReport};
use super::report::write_reports;
use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvalSplit {
    InSample,
    OutOfSample,
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSplit::InSample => "in_sample",
            EvalSplit::OutOfSample => "out_of_sample",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub split: EvalSplit,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// One trained classifier and its scores.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub mode: ChannelMode,
    pub fraction: f64,
    pub trial: usize,
    pub seed: u64,
    /// Training pixels (SVM) or training crops (networks) used.
    pub samples: usize,
    pub evaluations: Vec<Evaluation>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl TrialResult {
    pub fn total(&self, split: EvalSplit) -> Option<f64> {
        self.evaluations.iter().find(|e| e.split == split).map(|e| e.metrics.total)
    }
}

/// Mean and sample standard deviation of total balanced accuracy over the
/// successful trials of one (mode, fraction, split) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub mode: ChannelMode,
    pub fraction: f64,
    pub split: EvalSplit,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    pub classifier: Classifier,
    pub task: Task,
    /// Sweeps report one row set per fraction; cross-city runs use 1.
    pub sweep: bool,
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn summary_for(&self, mode: ChannelMode, fraction: f64, split: EvalSplit) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.mode == mode && r.fraction == fraction && r.split == split)
    }

    pub fn trial(&self, mode: ChannelMode, fraction: f64, trial: usize) -> Option<&TrialResult> {
        self.trials.iter().find(|t| t.mode == mode && t.fraction == fraction && t.trial == trial)
    }
}

/// Tiles of one experiment, already mapped onto the task's label set.
#[derive(Clone, Debug, Default)]
pub struct ExperimentData {
    pub train: Vec<RasterTile>,
    pub in_sample: Vec<RasterTile>,
    pub out_of_sample: Vec<RasterTile>,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, EvalError> {
        let train = DatasetManifest::read(&cfg.train_manifest)?;
        let in_sample = match &cfg.in_sample_manifest {
            Some(p) => DatasetManifest::read(p)?,
            None => train.clone(),
        };
        let out = DatasetManifest::read(&cfg.out_of_sample_manifest)?;
        Ok(Self::new(cfg.task, train.load(Some(Split::Train))?, in_sample.load(Some(Split::Test))?, out.load(None)?))
    }

    pub fn new(task: Task, train: Vec<RasterTile>, in_sample: Vec<RasterTile>, out_of_sample: Vec<RasterTile>) -> Self {
        let map = |mut tiles: Vec<RasterTile>| {
            if task != Task::Multiclass {
                for t in &mut tiles {
                    t.labels.data.iter_mut().for_each(|c| *c = task.relabel(*c));
                }
            }
            tiles
        };
        Self { train: map(train), in_sample: map(in_sample), out_of_sample: map(out_of_sample) }
    }
}

/// Seed of an independent stream derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const EVAL_STREAM: u64 = 1 << 20;

/// Stream for training samples and initialization. It does not depend on
/// the channel mode, so the modes of one trial see the same pixels, crops
/// and batch order and differ only in their input channels.
fn sample_stream(fraction_index: usize) -> u64 {
    1 + fraction_index as u64
}

enum Fitted {
    Net(Box<NetworkModel<f32>>, usize),
    Svm(OvoModel),
}

fn fit_network(cfg: &ExperimentConfig, mode: ChannelMode, tiles: &[RasterTile], seed: u64, sweep: bool) -> Result<Fitted, EvalError> {
    let arch = cfg.classifier.architecture().expect("network classifier");
    let n = cfg.task.num_classes();
    let spec = NetworkSpec::new(arch, mode.channels(), n)?;
    let norm = NormStats::compute(tiles)?;
    let mut model = NetworkModel::<f32>::build(spec, InputConfig { mode, norm }, seed)?;
    let policy = if sweep { AbsentClassPolicy::Exclude } else { AbsentClassPolicy::Error };
    let weights = compute_class_weights(tiles.iter().map(|t| &t.labels), n, policy)?;
    let tc = crate::net::TrainConfig { seed, ..cfg.train.clone() };
    let history = train_network(&mut model, tiles, &weights, &tc)?;
    Ok(Fitted::Net(Box::new(model), history.window))
}

fn fit_svm(cfg: &ExperimentConfig, mode: ChannelMode, rows: &[Vec<f64>], labels: &[u8], seed: u64) -> Result<Fitted, EvalError> {
    let ovo = OvoConfig { c: cfg.svm_c, gamma: cfg.svm_gamma, seed, ..OvoConfig::default() };
    Ok(Fitted::Svm(train_one_vs_one(rows, labels, mode, &ovo)?))
}

fn confusion_of(n: usize, truth: &[u8], pred: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::new(n);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Scores `model` on whole tiles (networks) or on a random pixel sample
/// (SVMs, whose per-pixel cost is high).
fn evaluate(cfg: &ExperimentConfig, model: &mut Fitted, tiles: &[RasterTile], pixel_seed: u64) -> Result<ConfusionMatrix, EvalError> {
    let n = cfg.task.num_classes();
    match model {
        Fitted::Net(m, window) => {
            let mut cm = ConfusionMatrix::new(n);
            for t in tiles {
                let (_, pred) = predict_raster(m, t, *window, cfg.overlap)?;
                cm.accumulate(&pred, &t.labels)?;
            }
            Ok(cm)
        }
        Fitted::Svm(m) => {
            let pool = PixelPool::new(tiles);
            if pool.is_empty() {
                return Err(EvalError::Invalid("empty evaluation set".into()));
            }
            let frac = (cfg.eval_pixels as f64 / pool.len() as f64).min(1.0);
            let idx = downselect_fraction(pool.len(), frac, pixel_seed)?;
            let (rows, truth) = sample_features(tiles, &idx, m.mode, |c| c)?;
            let pred = m.predict_batch(&rows)?;
            confusion_of(n, &truth, &pred)
        }
    }
}

fn evaluation(split: EvalSplit, cm: ConfusionMatrix) -> Evaluation {
    Evaluation { split, metrics: balanced_metrics(&cm), confusion: cm }
}

struct Job {
    mode: ChannelMode,
    fraction_index: usize,
    fraction: f64,
    trial: usize,
}

fn cross_city_trial(cfg: &ExperimentConfig, data: &ExperimentData, job: &Job) -> Result<TrialResult, EvalError> {
    let started = Instant::now();
    let trial_seed = cfg.trial_seed(job.trial);
    let seed = derive_seed(trial_seed, sample_stream(0));
    let eval_seed = derive_seed(trial_seed, EVAL_STREAM);
    let (mut model, samples) = match cfg.classifier {
        Classifier::Svm => {
            let pool = PixelPool::new(&data.train);
            let idx = downselect(pool.len(), cfg.downselect_factor, seed)?;
            info!("{} trial {}: samples kept: {} of {}", job.mode, job.trial, idx.len(), pool.len());
            let (rows, labels) = sample_features(&data.train, &idx, job.mode, |c| c)?;
            (fit_svm(cfg, job.mode, &rows, &labels, seed)?, idx.len())
        }
        _ => (fit_network(cfg, job.mode, &data.train, seed, false)?, data.train.len()),
    };
    let evaluations = vec![
        evaluation(EvalSplit::InSample, evaluate(cfg, &mut model, &data.in_sample, eval_seed)?),
        evaluation(EvalSplit::OutOfSample, evaluate(cfg, &mut model, &data.out_of_sample, eval_seed ^ 1)?),
    ];
    Ok(TrialResult {
        mode: job.mode,
        fraction: 1.0,
        trial: job.trial,
        seed: trial_seed,
        samples,
        evaluations,
        error: None,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// In-sample scores of a sweep are measured on the very samples (SVM) or
/// crops (networks) the classifier was fitted to.
fn sweep_trial(cfg: &ExperimentConfig, data: &ExperimentData, job: &Job) -> Result<TrialResult, EvalError> {
    let started = Instant::now();
    let trial_seed = cfg.trial_seed(job.trial);
    let seed = derive_seed(trial_seed, sample_stream(job.fraction_index));
    let eval_seed = derive_seed(trial_seed, EVAL_STREAM);
    let n = cfg.task.num_classes();
    let (in_cm, mut model, samples) = match cfg.classifier {
        Classifier::Svm => {
            let pool = PixelPool::new(&data.train);
            let idx = downselect_fraction(pool.len(), job.fraction, seed)?;
            info!("{} fraction {} trial {}: samples kept: {}", job.mode, job.fraction, job.trial, idx.len());
            let (rows, labels) = sample_features(&data.train, &idx, job.mode, |c| c)?;
            let model = fit_svm(cfg, job.mode, &rows, &labels, seed)?;
            let Fitted::Svm(m) = &model else { unreachable!() };
            let cm = confusion_of(n, &labels, &m.predict_batch(&rows)?)?;
            (cm, model, idx.len())
        }
        _ => {
            let crops = data
                .train
                .iter()
                .enumerate()
                .map(|(i, t)| crop_fraction(t, job.fraction, cfg.crop_mode, derive_seed(seed, i as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut model = fit_network(cfg, job.mode, &crops, seed, true)?;
            let cm = evaluate(cfg, &mut model, &crops, eval_seed)?;
            (cm, model, crops.len())
        }
    };
    let out_cm = evaluate(cfg, &mut model, &data.out_of_sample, eval_seed ^ 1)?;
    Ok(TrialResult {
        mode: job.mode,
        fraction: job.fraction,
        trial: job.trial,
        seed: trial_seed,
        samples,
        evaluations: vec![evaluation(EvalSplit::InSample, in_cm), evaluation(EvalSplit::OutOfSample, out_cm)],
        error: None,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

fn summarize(cfg: &ExperimentConfig, fractions: &[f64], trials: &[TrialResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for &fraction in fractions {
            for split in [EvalSplit::InSample, EvalSplit::OutOfSample] {
                let cell: Vec<&TrialResult> = trials.iter().filter(|t| t.mode == mode && t.fraction == fraction).collect();
                let values: Vec<f64> = cell.iter().filter_map(|t| t.total(split)).collect();
                let (mean, std) = mean_std(&values);
                rows.push(SummaryRow { mode, fraction, split, mean, std, ok: values.len(), failed: cell.len() - values.len() });
            }
        }
    }
    rows
}

fn jobs(cfg: &ExperimentConfig, fractions: &[f64]) -> Vec<Job> {
    let mut out = Vec::new();
    for trial in 0..cfg.trials {
        for &mode in &cfg.modes {
            for (fraction_index, &fraction) in fractions.iter().enumerate() {
                out.push(Job { mode, fraction_index, fraction, trial });
            }
        }
    }
    out
}

/// Trains one classifier per channel mode and trial on the training city
/// and scores it on held-out tiles of that city (in-sample) and on the
/// other city (out-of-sample). Any failure aborts the run.
pub fn cross_city_with(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentReport, EvalError> {
    cfg.validate()?;
    let trials = jobs(cfg, &[1.0])
        .par_iter()
        .map(|job| {
            cross_city_trial(cfg, data, job).map_err(|e| EvalError::context(format!("{} {} trial {}", cfg.id, job.mode, job.trial), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &[1.0], &trials);
    Ok(ExperimentReport { id: cfg.id.clone(), classifier: cfg.classifier, task: cfg.task, sweep: false, trials, summary })
}

/// Repeats training for every sample proportion in `cfg.fractions`. Failed
/// trials are recorded and skipped.
pub fn fraction_sweep_with(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentReport, EvalError> {
    cfg.validate()?;
    if cfg.fractions.windows(2).any(|w| w[1] > w[0]) {
        return Err(EvalError::Invalid("sweep fractions must be sorted in descending order".into()));
    }
    if cfg.trials < 2 {
        warn!("a sweep with a single trial reports no standard deviation");
    }
    let trials: Vec<TrialResult> = jobs(cfg, &cfg.fractions)
        .par_iter()
        .map(|job| {
            sweep_trial(cfg, data, job).unwrap_or_else(|e| {
                warn!("{} fraction {} trial {} failed: {e}", job.mode, job.fraction, job.trial);
                TrialResult {
                    mode: job.mode,
                    fraction: job.fraction,
                    trial: job.trial,
                    seed: cfg.trial_seed(job.trial),
                    samples: 0,
                    evaluations: Vec::new(),
                    error: Some(e.to_string()),
                    seconds: 0.0,
                }
            })
        })
        .collect();
    let summary = summarize(cfg, &cfg.fractions, &trials);
    Ok(ExperimentReport { id: cfg.id.clone(), classifier: cfg.classifier, task: cfg.task, sweep: true, trials, summary })
}

/// Loads the manifests, runs the cross-city protocol and writes
/// `output_dir/<id>/`.
pub fn run_cross_city(cfg: &ExperimentConfig) -> Result<ExperimentReport, EvalError> {
    let data = ExperimentData::load(cfg)?;
    let report = cross_city_with(cfg, &data)?;
    write_reports(cfg, &report)?;
    Ok(report)
}

/// Loads the manifests, runs the sample-proportion sweep and writes
/// `output_dir/<id>/`.
pub fn run_fraction_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport, EvalError> {
    let data = ExperimentData::load(cfg)?;
    let report = fraction_sweep_with(cfg, &data)?;
    write_reports(cfg, &report)?;
    Ok(report)
}
