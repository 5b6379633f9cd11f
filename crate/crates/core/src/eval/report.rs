use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::codec::write_atomic;

use super::config::ExperimentConfig;
use super::experiment::ExperimentReport;
use super::metrics::DEFINITIONS;
use super::EvalError;

pub const METRICS_HEADER: &str = "experiment,classifier,mode,split,class,metric,value,trial,seed";
pub const SWEEP_HEADER: &str = "mode,fraction,split,mean,std,trials_ok,trials_failed";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| v.to_string())
}

/// `metrics.csv`: one row per (trial, split, class, metric). Undefined
/// metrics are left out. Sweep rows carry the fraction in the experiment
/// column as `<id>@<fraction>`.
pub fn render_metrics_csv(r: &ExperimentReport) -> String {
    let mut s = format!("# {DEFINITIONS}\n{METRICS_HEADER}\n");
    for t in &r.trials {
        let experiment = if r.sweep { format!("{}@{}", r.id, t.fraction) } else { r.id.clone() };
        for e in &t.evaluations {
            let mut row = |class: &str, metric: &str, value: f64| {
                let _ = writeln!(s, "{experiment},{},{},{},{class},{metric},{value},{},{}", r.classifier, t.mode, e.split, t.trial, t.seed);
            };
            row("all", "total_balanced_accuracy", e.metrics.total);
            for (k, (acc, rec)) in e.metrics.per_class.iter().zip(&e.metrics.per_class_recall).enumerate() {
                let name = r.task.class_name(k);
                if let Some(a) = acc {
                    row(name, "balanced_accuracy", *a);
                }
                if let Some(v) = rec {
                    row(name, "recall", *v);
                }
            }
            if let Some(b) = e.metrics.binary {
                let name = r.task.class_name(1);
                for (metric, v) in [
                    ("accuracy", b.accuracy),
                    ("precision", b.precision),
                    ("binary_recall", b.recall),
                    ("f1", b.f1),
                    ("fnr", b.fnr),
                    ("fpr", b.fpr),
                ] {
                    row(name, metric, v);
                }
            }
        }
    }
    s
}

/// `sweep.csv`: mean and sample std of total balanced accuracy per cell.
pub fn render_sweep_csv(r: &ExperimentReport) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for row in &r.summary {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", row.mode, row.fraction, row.split, opt(row.mean), opt(row.std), row.ok, row.failed);
    }
    s
}

/// Human-readable table plus per-trial timings and failures.
pub fn render_log(r: &ExperimentReport) -> String {
    let mut s = format!("experiment {} ({}, {})\n{DEFINITIONS}\n\n", r.id, r.classifier, r.task);
    let _ = writeln!(s, "{:<10} {:>10} {:<14} {:>8} {:>8} {:>4}", "mode", "fraction", "split", "mean", "std", "n");
    for row in &r.summary {
        let f = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{:<10} {:>10} {:<14} {:>8} {:>8} {:>4}", row.mode, row.fraction, row.split, f(row.mean), f(row.std), row.ok);
    }
    s.push('\n');
    for t in &r.trials {
        match &t.error {
            None => {
                let _ = writeln!(s, "trial {} {} fraction {}: {} samples, {:.1}s", t.trial, t.mode, t.fraction, t.samples, t.seconds);
            }
            Some(e) => {
                let _ = writeln!(s, "trial {} {} fraction {}: FAILED: {e}", t.trial, t.mode, t.fraction);
            }
        }
    }
    s
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    write_atomic(path, text.as_bytes()).map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })
}

/// Writes `config.tsv`, `metrics.csv`, `sweep.csv` and `log.txt` under
/// `output_dir/<id>/` and returns that directory.
pub fn write_reports(cfg: &ExperimentConfig, r: &ExperimentReport) -> Result<PathBuf, EvalError> {
    let dir = cfg.output_dir.join(&cfg.id);
    std::fs::create_dir_all(&dir).map_err(|e| EvalError::Io { path: dir.display().to_string(), source: e })?;
    let mut kv = cfg.to_kv();
    kv.set("definitions", DEFINITIONS);
    write(&dir.join("config.tsv"), &kv.render())?;
    write(&dir.join("metrics.csv"), &render_metrics_csv(r))?;
    write(&dir.join("sweep.csv"), &render_sweep_csv(r))?;
    write(&dir.join("log.txt"), &render_log(r))?;
    Ok(dir)
}
