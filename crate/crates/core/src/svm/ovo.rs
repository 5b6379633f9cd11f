use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::data::ChannelMode;

use super::features::FeatureNorm;
use super::kernel::squared_distance;
use super::smo::{train_smo_binary, SmoConfig};
use super::SvmError;

#[derive(Clone, Debug, PartialEq)]
pub struct OvoConfig {
    pub c: f64,
    /// `None` picks `1 / (dim * var)` of the standardized training features.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OvoConfig {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tol: 1e-3, seed: 0 }
    }
}

/// Binary machine separating class `a` (positive) from class `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct OvoPair {
    pub a: u8,
    pub b: u8,
    /// Support vectors as positions in the shared pool.
    pub slots: Vec<usize>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

/// One-vs-one multiclass SVM. Support vectors are pooled across pairs and
/// stored standardized.
#[derive(Clone, Debug, PartialEq)]
pub struct OvoModel {
    pub mode: ChannelMode,
    pub classes: Vec<u8>,
    pub norm: FeatureNorm,
    pub gamma: f64,
    pub c: f64,
    pub vectors: Vec<Vec<f64>>,
    pub pairs: Vec<OvoPair>,
}

/// Default kernel width for standardized features.
pub fn default_gamma(rows: &[Vec<f64>]) -> f64 {
    let d = rows.first().map_or(1, Vec::len).max(1);
    let n = (rows.len() * d) as f64;
    let mean = rows.iter().flatten().sum::<f64>() / n;
    let var = rows.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 1e-12 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

/// Trains one binary SVM per pair of classes present in `labels`.
pub fn train_one_vs_one(rows: &[Vec<f64>], labels: &[u8], mode: ChannelMode, cfg: &OvoConfig) -> Result<OvoModel, SvmError> {
    if rows.len() != labels.len() {
        return Err(SvmError::Invalid(format!("{} samples but {} labels", rows.len(), labels.len())));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != mode.feature_len()) {
        return Err(SvmError::LengthMismatch { expected: mode.feature_len(), got: r.len() });
    }
    let norm = FeatureNorm::fit(rows)?;
    let xn: Vec<Vec<f64>> = rows.iter().map(|r| norm.apply(r)).collect::<Result<_, _>>()?;
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(&xn));
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::SingleClass);
    }
    let pairs: Vec<(u8, u8)> =
        classes.iter().enumerate().flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b))).collect();
    let smo = SmoConfig { c: cfg.c, gamma, tol: cfg.tol, max_passes: None, seed: cfg.seed };
    let trained: Vec<_> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| xn[i].clone()).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            train_smo_binary(&x, &y, &smo).map(|m| (a, b, idx, m))
        })
        .collect::<Result<_, _>>()?;

    let mut slot_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut vectors = Vec::new();
    let mut out = Vec::with_capacity(trained.len());
    for (a, b, idx, m) in trained {
        if !m.converged {
            warn!("pair ({a}, {b}) did not converge");
        }
        let slots = m
            .sv_indices
            .iter()
            .map(|&local| {
                let global = idx[local];
                *slot_of.entry(global).or_insert_with(|| {
                    vectors.push(xn[global].clone());
                    vectors.len() - 1
                })
            })
            .collect();
        out.push(OvoPair { a, b, slots, coef: m.coef, bias: m.bias, converged: m.converged });
    }
    Ok(OvoModel { mode, classes, norm, gamma, c: cfg.c, vectors, pairs: out })
}

impl OvoModel {
    fn kernels(&self, xn: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|v| (-self.gamma * squared_distance(v, xn)).exp()).collect()
    }

    fn pair_decision(p: &OvoPair, k: &[f64]) -> f64 {
        p.bias + p.slots.iter().zip(&p.coef).map(|(&s, &c)| c * k[s]).sum::<f64>()
    }

    /// Majority vote over all pairs; ties go to the smallest class id.
    pub fn predict(&self, raw: &[f64]) -> Result<u8, SvmError> {
        let k = self.kernels(&self.norm.apply(raw)?);
        let mut votes: BTreeMap<u8, usize> = self.classes.iter().map(|&c| (c, 0)).collect();
        for p in &self.pairs {
            let winner = if Self::pair_decision(p, &k) >= 0.0 { p.a } else { p.b };
            *votes.get_mut(&winner).expect("pair classes are model classes") += 1;
        }
        let best = votes.values().copied().max().unwrap_or(0);
        Ok(*votes.iter().find(|&(_, &v)| v == best).map(|(c, _)| c).expect("at least one class"))
    }

    /// Signed margin of the first pair; for two-class models positive means
    /// the smaller class id.
    pub fn margin(&self, raw: &[f64]) -> Result<f64, SvmError> {
        let p = self.pairs.first().ok_or(SvmError::SingleClass)?;
        Ok(Self::pair_decision(p, &self.kernels(&self.norm.apply(raw)?)))
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>, SvmError> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    pub fn support_vector_count(&self) -> usize {
        self.vectors.len()
    }
}
