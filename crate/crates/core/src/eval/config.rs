use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{class, ChannelMode, CropMode, CLASS_NAMES};
use crate::kv::KvFile;
use crate::net::{Architecture, TrainConfig};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classifier {
    SegNet,
    SegNetLite,
    Svm,
}

impl Classifier {
    pub fn architecture(self) -> Option<Architecture> {
        match self {
            Classifier::SegNet => Some(Architecture::SegNet),
            Classifier::SegNetLite => Some(Architecture::SegNetLite),
            Classifier::Svm => None,
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::SegNet => "segnet",
            Classifier::SegNetLite => "segnet_lite",
            Classifier::Svm => "svm",
        })
    }
}

impl FromStr for Classifier {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "segnet" => Ok(Classifier::SegNet),
            "segnet_lite" => Ok(Classifier::SegNetLite),
            "svm" => Ok(Classifier::Svm),
            other => Err(EvalError::Invalid(format!("unknown classifier '{other}'"))),
        }
    }
}

/// Label set a run classifies into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// All six land-cover classes.
    Multiclass,
    /// Building (1) against everything else (0).
    Building,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Multiclass => CLASS_NAMES.len(),
            Task::Building => 2,
        }
    }

    pub fn relabel(self, c: u8) -> u8 {
        match self {
            Task::Multiclass => c,
            Task::Building => (c == class::BUILDING) as u8,
        }
    }

    pub fn class_name(self, k: usize) -> &'static str {
        match self {
            Task::Multiclass => CLASS_NAMES[k],
            Task::Building => ["other", "building"][k],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Multiclass => "multiclass",
            Task::Building => "building",
        })
    }
}

impl FromStr for Task {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multiclass" => Ok(Task::Multiclass),
            "building" => Ok(Task::Building),
            other => Err(EvalError::Invalid(format!("unknown task '{other}'"))),
        }
    }
}

/// Everything a cross-city run or a fraction sweep needs. Stored as a
/// key/value TSV file; relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub classifier: Classifier,
    pub modes: Vec<ChannelMode>,
    pub task: Task,
    pub train_manifest: PathBuf,
    /// Its test split is the in-sample evaluation set; defaults to the
    /// training manifest.
    pub in_sample_manifest: Option<PathBuf>,
    /// Every tile is used for out-of-sample evaluation.
    pub out_of_sample_manifest: PathBuf,
    /// Sample proportions of a sweep, descending.
    pub fractions: Vec<f64>,
    pub trials: usize,
    /// Trial `t` runs with seed `seed + t`.
    pub seed: u64,
    /// Reports go to `output_dir/<id>/`.
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub overlap: f64,
    pub crop_mode: CropMode,
    pub svm_c: f64,
    pub svm_gamma: Option<f64>,
    /// Cross-city SVM runs keep one training pixel in this many.
    pub downselect_factor: u64,
    /// SVMs are scored on this many random pixels per evaluation set.
    pub eval_pixels: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "experiment".into(),
            classifier: Classifier::SegNetLite,
            modes: ChannelMode::ALL.to_vec(),
            task: Task::Multiclass,
            train_manifest: PathBuf::new(),
            in_sample_manifest: None,
            out_of_sample_manifest: PathBuf::new(),
            fractions: vec![1.0],
            trials: 1,
            seed: 0,
            output_dir: PathBuf::from("reports"),
            train: TrainConfig { batch_size: 4, epochs: 3, lr: 0.05, ..TrainConfig::default() },
            overlap: 0.0,
            crop_mode: CropMode::PerAxis,
            svm_c: 1.0,
            svm_gamma: None,
            downselect_factor: 1000,
            eval_pixels: 4000,
        }
    }
}

fn csv<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id.starts_with('.') {
            return Err(EvalError::Invalid(format!("experiment id '{}' is not a plain directory name", self.id)));
        }
        if self.trials == 0 {
            return Err(EvalError::Invalid("trials must be at least 1".into()));
        }
        if self.modes.is_empty() || self.fractions.is_empty() {
            return Err(EvalError::Invalid("modes and fractions must not be empty".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(EvalError::Invalid(format!("fraction {f} outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(EvalError::Invalid(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        if !(self.svm_c > 0.0) || self.svm_gamma.is_some_and(|g| !(g > 0.0)) || self.downselect_factor == 0 {
            return Err(EvalError::Invalid("svm_c, svm_gamma and downselect_factor must be positive".into()));
        }
        if self.eval_pixels == 0 {
            return Err(EvalError::Invalid("eval_pixels must be positive".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("id", &self.id)
            .set("classifier", self.classifier)
            .set("modes", csv(&self.modes))
            .set("task", self.task)
            .set("train_manifest", self.train_manifest.display());
        if let Some(p) = &self.in_sample_manifest {
            kv.set("in_sample_manifest", p.display());
        }
        kv.set("out_of_sample_manifest", self.out_of_sample_manifest.display())
            .set("fractions", csv(&self.fractions))
            .set("trials", self.trials)
            .set("seed", self.seed)
            .set("output_dir", self.output_dir.display())
            .set("window", self.train.window)
            .set("batch_size", self.train.batch_size)
            .set("epochs", self.train.epochs);
        if let Some(s) = self.train.steps_per_epoch {
            kv.set("steps_per_epoch", s);
        }
        kv.set("lr", self.train.lr)
            .set("momentum", self.train.momentum)
            .set("flip", self.train.flip)
            .set("overlap", self.overlap)
            .set("crop_mode", self.crop_mode)
            .set("svm_c", self.svm_c);
        if let Some(g) = self.svm_gamma {
            kv.set("svm_gamma", g);
        }
        kv.set("downselect_factor", self.downselect_factor).set("eval_pixels", self.eval_pixels);
        kv
    }

    /// Missing keys take their defaults except the two manifests, which are
    /// required.
    pub fn from_kv(kv: &KvFile, base: &Path) -> Result<Self, EvalError> {
        let d = Self::default();
        let path = |key: &str| -> Result<Option<PathBuf>, EvalError> { Ok(kv.get(key).map(|p| base.join(p))) };
        let train = TrainConfig {
            window: kv.parse_or("window", d.train.window)?,
            batch_size: kv.parse_or("batch_size", d.train.batch_size)?,
            epochs: kv.parse_or("epochs", d.train.epochs)?,
            steps_per_epoch: kv.parse_value("steps_per_epoch")?,
            lr: kv.parse_or("lr", d.train.lr)?,
            momentum: kv.parse_or("momentum", d.train.momentum)?,
            flip: kv.parse_or("flip", d.train.flip)?,
            ..d.train
        };
        let cfg = Self {
            id: kv.get("id").unwrap_or(&d.id).to_string(),
            classifier: kv.get("classifier").map(str::parse).transpose()?.unwrap_or(d.classifier),
            modes: kv.parse_list("modes")?.unwrap_or(d.modes),
            task: kv.get("task").map(str::parse).transpose()?.unwrap_or(d.task),
            train_manifest: path("train_manifest")?.ok_or_else(|| crate::kv::KvError::Missing("train_manifest".into()))?,
            in_sample_manifest: path("in_sample_manifest")?,
            out_of_sample_manifest: path("out_of_sample_manifest")?
                .ok_or_else(|| crate::kv::KvError::Missing("out_of_sample_manifest".into()))?,
            fractions: kv.parse_list("fractions")?.unwrap_or(d.fractions),
            trials: kv.parse_or("trials", d.trials)?,
            seed: kv.parse_or("seed", d.seed)?,
            output_dir: path("output_dir")?.unwrap_or_else(|| base.join(&d.output_dir)),
            train,
            overlap: kv.parse_or("overlap", d.overlap)?,
            crop_mode: kv.parse_or("crop_mode", d.crop_mode)?,
            svm_c: kv.parse_or("svm_c", d.svm_c)?,
            svm_gamma: kv.parse_value("svm_gamma")?,
            downselect_factor: kv.parse_or("downselect_factor", d.downselect_factor)?,
            eval_pixels: kv.parse_or("eval_pixels", d.eval_pixels)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let kv = KvFile::read(path)?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ExperimentConfig {
            id: "x".into(),
            classifier: Classifier::Svm,
            task: Task::Building,
            train_manifest: "/d/a.tsv".into(),
            in_sample_manifest: Some("/d/a2.tsv".into()),
            out_of_sample_manifest: "/d/b.tsv".into(),
            fractions: vec![0.001, 0.0001],
            trials: 5,
            svm_gamma: Some(0.25),
            output_dir: "/r".into(),
            ..Default::default()
        };
        let back = ExperimentConfig::from_kv(&KvFile::parse(&cfg.to_kv().render()).unwrap(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn relative_paths_and_defaults() {
        let kv = KvFile::parse("train_manifest\ta/m.tsv\nout_of_sample_manifest\tb/m.tsv\n").unwrap();
        let cfg = ExperimentConfig::from_kv(&kv, Path::new("/base")).unwrap();
        assert_eq!(cfg.train_manifest, PathBuf::from("/base/a/m.tsv"));
        assert_eq!(cfg.output_dir, PathBuf::from("/base/reports"));
        assert_eq!(cfg.modes.len(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        let base = "train_manifest\ta\nout_of_sample_manifest\tb\n";
        for extra in ["trials\t0\n", "fractions\t0.5,1.5\n", "classifier\tforest\n", "id\t../x\n"] {
            let kv = KvFile::parse(&format!("{base}{extra}")).unwrap();
            assert!(ExperimentConfig::from_kv(&kv, Path::new("/")).is_err(), "{extra}");
        }
    }

    #[test]
    fn building_task_relabels() {
        assert_eq!(Task::Building.relabel(class::BUILDING), 1);
        assert_eq!(Task::Building.relabel(class::TREE), 0);
        assert_eq!(Task::Multiclass.relabel(class::TREE), class::TREE);
    }
}
