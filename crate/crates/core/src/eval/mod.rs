//! Confusion matrices, class-balanced metrics and the two experiment
//! protocols.

mod config;
mod experiment;
mod metrics;
mod report;

pub use config::{Classifier, ExperimentConfig, Task};
pub use experiment::{
    cross_city_with, derive_seed, fraction_sweep_with, run_cross_city, run_fraction_sweep, EvalSplit, Evaluation,
    ExperimentData, ExperimentReport, SummaryRow, TrialResult,
};
pub use metrics::{balanced_metrics, BinaryMetrics, ConfusionMatrix, MetricsReport, DEFINITIONS};
pub use report::{render_log, render_metrics_csv, render_sweep_csv, write_reports, METRICS_HEADER, SWEEP_HEADER};

use thiserror::Error;

use crate::data::DataError;
use crate::kv::KvError;
use crate::net::NetError;
use crate::svm::SvmError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] KvError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{context}: {source}")]
    Context { context: String, source: Box<EvalError> },
}

impl EvalError {
    pub fn context(context: impl Into<String>, source: EvalError) -> Self {
        EvalError::Context { context: context.into(), source: Box::new(source) }
    }

    /// True when training produced non-finite values.
    pub fn is_numeric(&self) -> bool {
        match self {
            EvalError::Net(NetError::NonFinite { .. }) => true,
            EvalError::Context { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
