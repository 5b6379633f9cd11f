use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use log::info;

use ndsm_core::data::{
    crop_fraction, default_test_tiles, generate_city, write_city, write_labels, ChannelMode, CityStyle, CropMode,
    DatasetManifest, LabelRaster, NormStats, RasterTile, Split,
};
use ndsm_core::eval::{
    balanced_metrics, derive_seed, render_log, render_metrics_csv, run_cross_city, run_fraction_sweep, Classifier,
    ConfusionMatrix, EvalError, EvalSplit, Evaluation, ExperimentConfig, ExperimentReport, Task, TrialResult,
};
use ndsm_core::kv::KvFile;
use ndsm_core::net::{
    compute_class_weights, load_checkpoint, predict_raster, save_checkpoint, train_network, AbsentClassPolicy,
    Architecture, InputConfig, NetError, NetworkModel, NetworkSpec, TrainConfig,
};
use ndsm_core::svm::{
    downselect, downselect_fraction, load_svm, predict_tile, sample_features, save_svm, train_one_vs_one, OvoConfig,
    OvoModel, PixelPool,
};

use crate::GlobalArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Segnet,
    SegnetLite,
    Svm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Surface,
    Spectral,
    Fused,
}

impl From<Mode> for ChannelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Surface => ChannelMode::Surface,
            Mode::Spectral => ChannelMode::Spectral,
            Mode::Fused => ChannelMode::Fused,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Multiclass,
    Building,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Multiclass => Task::Multiclass,
            TaskArg::Building => Task::Building,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// City style: A or B
    #[arg(long)]
    pub style: String,
    /// Number of tiles
    #[arg(long, default_value_t = 4)]
    pub tiles: usize,
    /// Tile side in pixels
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Tiles placed in the test split (default: a quarter)
    #[arg(long)]
    pub test_tiles: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub arch: Arch,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Dataset manifest; its train split is used
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Multiclass)]
    pub task: TaskArg,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Crops per epoch (default: enough to cover the data once)
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    /// Training window side in pixels
    #[arg(long, default_value_t = TrainConfig::default().window)]
    pub window: usize,
    /// SVM box constraint
    #[arg(long, default_value_t = 1.0)]
    pub svm_c: f64,
    /// RBF width (default: 1 / (dim * variance) of the standardized features)
    #[arg(long)]
    pub svm_gamma: Option<f64>,
    /// SVM: keep one training pixel in this many
    #[arg(long, default_value_t = 1000)]
    pub downselect_factor: u64,
    /// Sample proportion: SVM pixel share or network crop size; overrides
    /// --downselect-factor
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint or SVM model file
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest holding the tile
    #[arg(long)]
    pub manifest: PathBuf,
    /// Tile id
    #[arg(long)]
    pub tile: String,
    /// Label raster to write
    #[arg(long)]
    pub out: PathBuf,
    /// Network prediction window
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    /// Overlap fraction of neighbouring windows
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint or SVM model file
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Report directory
    #[arg(long)]
    pub report: PathBuf,
    /// Network prediction window
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    /// Overlap fraction of neighbouring windows
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment configuration (key/value TSV)
    #[arg(long)]
    pub config: PathBuf,
}

pub fn is_numeric(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<EvalError>().is_some_and(EvalError::is_numeric)
            || matches!(c.downcast_ref::<NetError>(), Some(NetError::NonFinite { .. }))
    })
}

fn echo(path: &Path, kv: &KvFile) -> Result<()> {
    kv.write(path).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn synth(g: &GlobalArgs, a: SynthArgs) -> Result<()> {
    let style = CityStyle::by_name(&a.style)?;
    let n_test = a.test_tiles.unwrap_or_else(|| default_test_tiles(a.tiles));
    if n_test > a.tiles {
        bail!("{n_test} test tiles requested out of {}", a.tiles);
    }
    let tiles = generate_city(&style, a.tiles, a.size, g.seed)?;
    let (_, manifest) = write_city(&a.out, &tiles, n_test)?;
    let mut kv = KvFile::new();
    kv.set("command", "synth")
        .set("style", &style.name)
        .set("tiles", a.tiles)
        .set("size", a.size)
        .set("test_tiles", n_test)
        .set("seed", g.seed);
    echo(&a.out.join("synth.tsv"), &kv)?;
    info!("wrote {} tiles ({n_test} test) to {}", a.tiles, manifest.display());
    Ok(())
}

fn load_split(manifest: &Path, split: Option<Split>, task: Task) -> Result<Vec<RasterTile>> {
    let m = DatasetManifest::read(manifest)?;
    let mut tiles = m.load(split)?;
    if tiles.is_empty() {
        bail!("{} has no tiles in the requested split", manifest.display());
    }
    for t in &mut tiles {
        t.labels.data.iter_mut().for_each(|c| *c = task.relabel(*c));
    }
    Ok(tiles)
}

pub fn train(g: &GlobalArgs, a: TrainArgs) -> Result<()> {
    let mode = ChannelMode::from(a.mode);
    let task = Task::from(a.task);
    if let Some(f) = a.fraction {
        if !(f > 0.0 && f <= 1.0) {
            bail!("--fraction {f} outside (0, 1]");
        }
    }
    let tiles = load_split(&a.manifest, Some(Split::Train), task)?;
    let mut kv = KvFile::new();
    kv.set("command", "train")
        .set("arch", format!("{:?}", a.arch).to_lowercase())
        .set("mode", mode)
        .set("task", task)
        .set("manifest", a.manifest.display())
        .set("out", a.out.display())
        .set("seed", g.seed);
    if let Some(f) = a.fraction {
        kv.set("fraction", f);
    }
    match a.arch {
        Arch::Svm => {
            let pool = PixelPool::new(&tiles);
            let idx = match a.fraction {
                Some(f) => downselect_fraction(pool.len(), f, g.seed)?,
                None => downselect(pool.len(), a.downselect_factor, g.seed)?,
            };
            info!("samples kept: {} of {}", idx.len(), pool.len());
            let (rows, labels) = sample_features(&tiles, &idx, mode, |c| c)?;
            let cfg = OvoConfig { c: a.svm_c, gamma: a.svm_gamma, seed: g.seed, ..OvoConfig::default() };
            let model = train_one_vs_one(&rows, &labels, mode, &cfg)?;
            info!("{} support vectors, gamma {}", model.support_vector_count(), model.gamma);
            save_svm(&a.out, &model)?;
            kv.set("downselect_factor", a.downselect_factor)
                .set("samples", idx.len())
                .set("svm_c", a.svm_c)
                .set("svm_gamma", model.gamma);
        }
        Arch::Segnet | Arch::SegnetLite => {
            let arch = if a.arch == Arch::Segnet { Architecture::SegNet } else { Architecture::SegNetLite };
            let tiles = match a.fraction {
                Some(f) => tiles
                    .iter()
                    .enumerate()
                    .map(|(i, t)| crop_fraction(t, f, CropMode::PerAxis, derive_seed(g.seed, i as u64)))
                    .collect::<Result<Vec<_>, _>>()?,
                None => tiles,
            };
            let sidecar = DatasetManifest::sidecar_path(&a.manifest);
            let norm = if a.fraction.is_none() && sidecar.exists() {
                NormStats::from_kv(&KvFile::read(&sidecar)?)?
            } else {
                NormStats::compute(&tiles)?
            };
            let n = task.num_classes();
            let policy = if a.fraction.is_some() { AbsentClassPolicy::Exclude } else { AbsentClassPolicy::Error };
            let weights = compute_class_weights(tiles.iter().map(|t| &t.labels), n, policy)?;
            let cfg = TrainConfig {
                window: a.window,
                batch_size: a.batch_size,
                epochs: a.epochs,
                steps_per_epoch: a.steps_per_epoch,
                lr: a.lr,
                momentum: a.momentum,
                seed: g.seed,
                flip: false,
            };
            let mut model = NetworkModel::<f32>::build(NetworkSpec::new(arch, mode.channels(), n)?, InputConfig { mode, norm }, g.seed)?;
            let history = train_network(&mut model, &tiles, &weights, &cfg)?;
            save_checkpoint(&a.out, &model)?;
            kv.set("epochs", a.epochs)
                .set("steps_per_epoch", history.steps_per_epoch)
                .set("window", history.window)
                .set("batch_size", a.batch_size)
                .set("lr", a.lr)
                .set("momentum", a.momentum)
                .set("class_weights", weights.weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","))
                .set("final_loss", history.epoch_loss.last().copied().unwrap_or(f64::NAN));
        }
    }
    echo(&sibling(&a.out, ".config.tsv"), &kv)?;
    info!("model written to {}", a.out.display());
    Ok(())
}

enum Model {
    Net(Box<NetworkModel<f32>>),
    Svm(OvoModel),
}

impl Model {
    fn load(path: &Path) -> Result<Self> {
        let head = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(match head.get(..4) {
            Some(b"SGCK") => Model::Net(Box::new(load_checkpoint(path)?)),
            Some(b"SVMK") => Model::Svm(load_svm(path)?),
            _ => bail!("{} is neither a network checkpoint nor an SVM model", path.display()),
        })
    }

    fn classes(&self) -> usize {
        match self {
            Model::Net(m) => m.spec().num_classes,
            Model::Svm(m) => m.classes.iter().max().map_or(0, |&c| c as usize + 1),
        }
    }

    fn task(&self) -> Task {
        if self.classes() == 2 {
            Task::Building
        } else {
            Task::Multiclass
        }
    }

    fn classifier(&self) -> Classifier {
        match self {
            Model::Net(m) if m.spec().architecture == Architecture::SegNet => Classifier::SegNet,
            Model::Net(_) => Classifier::SegNetLite,
            Model::Svm(_) => Classifier::Svm,
        }
    }

    fn mode(&self) -> ChannelMode {
        match self {
            Model::Net(m) => m.input.mode,
            Model::Svm(m) => m.mode,
        }
    }

    fn predict(&mut self, tile: &RasterTile, window: usize, overlap: f64) -> Result<LabelRaster> {
        Ok(match self {
            Model::Net(m) => predict_raster(m, tile, window, overlap)?.1,
            Model::Svm(m) => predict_tile(m, tile)?,
        })
    }
}

pub fn predict(g: &GlobalArgs, a: PredictArgs) -> Result<()> {
    let mut model = Model::load(&a.model)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let rec = manifest
        .records
        .iter()
        .find(|r| r.id == a.tile)
        .with_context(|| format!("tile '{}' not in {}", a.tile, a.manifest.display()))?;
    let tile = ndsm_core::data::read_tile(&manifest.dir, rec)?;
    let labels = model.predict(&tile, a.window, a.overlap)?;
    write_labels(&a.out, &labels)?;
    let mut kv = KvFile::new();
    kv.set("command", "predict")
        .set("model", a.model.display())
        .set("manifest", a.manifest.display())
        .set("tile", &a.tile)
        .set("window", a.window)
        .set("overlap", a.overlap)
        .set("seed", g.seed);
    echo(&sibling(&a.out, ".config.tsv"), &kv)?;
    info!("labels written to {}", a.out.display());
    Ok(())
}

pub fn eval(g: &GlobalArgs, a: EvalArgs) -> Result<()> {
    let mut model = Model::load(&a.model)?;
    let task = model.task();
    let tiles = load_split(&a.manifest, a.split.split(), task)?;
    let mut cm = ConfusionMatrix::new(task.num_classes());
    for t in &tiles {
        let pred = model.predict(t, a.window, a.overlap)?;
        cm.accumulate(&pred, &t.labels)?;
    }
    let metrics = balanced_metrics(&cm);
    info!("total balanced accuracy {:.4} over {} tiles", metrics.total, tiles.len());
    let id = a.report.file_name().map_or_else(|| "eval".into(), |n| n.to_string_lossy().into_owned());
    let split = if a.manifest_is_training_city() { EvalSplit::InSample } else { EvalSplit::OutOfSample };
    let report = ExperimentReport {
        id,
        classifier: model.classifier(),
        task,
        sweep: false,
        trials: vec![TrialResult {
            mode: model.mode(),
            fraction: 1.0,
            trial: 0,
            seed: g.seed,
            samples: tiles.len(),
            evaluations: vec![Evaluation { split, confusion: cm, metrics }],
            error: None,
            seconds: 0.0,
        }],
        summary: Vec::new(),
    };
    std::fs::create_dir_all(&a.report).with_context(|| format!("creating {}", a.report.display()))?;
    let mut kv = KvFile::new();
    kv.set("command", "eval")
        .set("model", a.model.display())
        .set("manifest", a.manifest.display())
        .set("split", format!("{:?}", a.split).to_lowercase())
        .set("window", a.window)
        .set("overlap", a.overlap)
        .set("seed", g.seed);
    echo(&a.report.join("config.tsv"), &kv)?;
    for (name, text) in [("metrics.csv", render_metrics_csv(&report)), ("log.txt", render_log(&report))] {
        let path = a.report.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

impl EvalArgs {
    /// A model scored on its own manifest's held-out split is in-sample.
    fn manifest_is_training_city(&self) -> bool {
        let echoed = sibling(&self.model, ".config.tsv");
        KvFile::read(&echoed)
            .ok()
            .and_then(|kv| kv.get("manifest").map(|m| Path::new(m) == self.manifest))
            .unwrap_or(false)
    }
}

fn load_config(g: &GlobalArgs, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::read(path).with_context(|| format!("reading {}", path.display()))?;
    if KvFile::read(path)?.get("seed").is_none() {
        cfg.seed = g.seed;
    }
    Ok(cfg)
}

pub fn cross_city(g: &GlobalArgs, a: ExperimentArgs) -> Result<()> {
    let cfg = load_config(g, &a.config)?;
    let report = run_cross_city(&cfg)?;
    print!("{}", render_log(&report));
    info!("reports written to {}", cfg.output_dir.join(&cfg.id).display());
    Ok(())
}

pub fn sweep(g: &GlobalArgs, a: ExperimentArgs) -> Result<()> {
    let cfg = load_config(g, &a.config)?;
    let report = run_fraction_sweep(&cfg)?;
    print!("{}", render_log(&report));
    info!("reports written to {}", cfg.output_dir.join(&cfg.id).display());
    Ok(())
}
