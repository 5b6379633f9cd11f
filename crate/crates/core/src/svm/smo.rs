//! Sequential minimal optimization for the soft-margin RBF SVM dual.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernel::{rbf_kernel, squared_distance};
use super::SvmError;

/// Kernel matrices up to this many rows are precomputed.
const DENSE_LIMIT: usize = 4000;
/// Minimum multiplier change accepted as progress.
const STEP_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SmoConfig {
    pub c: f64,
    pub gamma: f64,
    /// KKT tolerance on `y f(x)`.
    pub tol: f64,
    /// Outer passes before giving up; defaults to `10 n`.
    pub max_passes: Option<usize>,
    pub seed: u64,
}

impl SmoConfig {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self { c, gamma, tol: 1e-3, max_passes: None, seed: 0 }
    }
}

/// A trained binary RBF SVM; `decision(x) = sum_i coef_i k(sv_i, x) + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support: Vec<Vec<f64>>,
    /// `alpha_i y_i` per support vector.
    pub coef: Vec<f64>,
    /// Positions of the support vectors in the training set.
    pub sv_indices: Vec<usize>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// False if the pass budget ran out before the KKT conditions held.
    pub converged: bool,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        let mut f = self.bias;
        for (sv, &a) in self.support.iter().zip(&self.coef) {
            f += a * rbf_kernel(sv, x, self.gamma)?;
        }
        Ok(f)
    }

    /// `+1` or `-1`; a zero margin counts as positive.
    pub fn predict(&self, x: &[f64]) -> Result<f64, SvmError> {
        Ok(if self.decision(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Dual multipliers over the full training set of size `n`.
    pub fn alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&i, &c) in self.sv_indices.iter().zip(&self.coef) {
            a[i] = c.abs();
        }
        a
    }
}

enum Kernel<'a> {
    Dense { n: usize, k: Vec<f64> },
    Lazy { x: &'a [Vec<f64>], gamma: f64 },
}

impl Kernel<'_> {
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Dense { n, k } => k[i * n + j],
            Kernel::Lazy { x, gamma } => (-gamma * squared_distance(&x[i], &x[j])).exp(),
        }
    }
}

/// `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j)`.
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if alpha[i] != 0.0 && alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * (-gamma * squared_distance(&x[i], &x[j])).exp();
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

struct Solver<'a> {
    k: Kernel<'a>,
    y: &'a [f64],
    alpha: Vec<f64>,
    /// `f(x_i) - y_i` for every sample.
    err: Vec<f64>,
    b: f64,
    c: f64,
    tol: f64,
    rng: ChaCha8Rng,
}

impl Solver<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1o, a2o) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.err[i1], self.err[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 { ((a2o - a1o).max(0.0), (c + a2o - a1o).min(c)) } else { ((a1o + a2o - c).max(0.0), (a1o + a2o).min(c)) };
        if lo >= hi {
            return false;
        }
        let (k11, k12, k22) = (self.k.get(i1, i1), self.k.get(i1, i2), self.k.get(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 0.0 {
            (a2o + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Objective at both ends of the segment.
            let f1 = y1 * (e1 + self.b) - a1o * k11 - s * a2o * k12;
            let f2 = y2 * (e2 + self.b) - s * a1o * k12 - a2o * k22;
            let obj = |a2: f64| {
                let a1 = a1o + s * (a2o - a2);
                a1 * f1 + a2 * f2 + 0.5 * a1 * a1 * k11 + 0.5 * a2 * a2 * k22 + s * a1 * a2 * k12
            };
            let (ol, oh) = (obj(lo), obj(hi));
            if ol < oh - STEP_EPS {
                lo
            } else if ol > oh + STEP_EPS {
                hi
            } else {
                a2o
            }
        };
        if (a2 - a2o).abs() < STEP_EPS * (a2 + a2o + STEP_EPS) {
            return false;
        }
        let mut a1 = a1o + s * (a2o - a2);
        // Snap round-off onto the box.
        if a1 < 1e-14 {
            a2 += s * a1;
            a1 = 0.0;
        } else if a1 > c - 1e-14 {
            a2 += s * (a1 - c);
            a1 = c;
        }
        a2 = a2.clamp(0.0, c);
        let (d1, d2) = (y1 * (a1 - a1o), y2 * (a2 - a2o));
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1 > 0.0 && a1 < c {
            b1
        } else if a2 > 0.0 && a2 < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for i in 0..self.n() {
            self.err[i] += d1 * self.k.get(i1, i) + d2 * self.k.get(i2, i) + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.b = b_new;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let (y2, a2, e2) = (self.y[i2], self.alpha[i2], self.err[i2]);
        let r2 = e2 * y2;
        if !((r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0)) {
            return false;
        }
        let n = self.n();
        let free: Vec<usize> = (0..n).filter(|&i| self.free(i)).collect();
        if free.len() > 1 {
            let i1 = *free
                .iter()
                .max_by(|&&a, &&b| (self.err[a] - e2).abs().total_cmp(&(self.err[b] - e2).abs()))
                .expect("nonempty");
            if self.take_step(i1, i2) {
                return true;
            }
        }
        if !free.is_empty() {
            let start = self.rng.gen_range(0..free.len());
            for k in 0..free.len() {
                if self.take_step(free[(start + k) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.gen_range(0..n);
        (0..n).any(|k| self.take_step((start + k) % n, i2))
    }
}

/// Trains a binary SVM on labels in {-1, +1}.
pub fn train_smo_binary(x: &[Vec<f64>], y: &[f64], cfg: &SmoConfig) -> Result<SvmModel, SvmError> {
    let n = x.len();
    if n != y.len() {
        return Err(SvmError::Invalid(format!("{n} samples but {} labels", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::Invalid(format!("binary label {bad} (expected -1 or +1)")));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(SvmError::SingleClass);
    }
    if !(cfg.c > 0.0) || !(cfg.gamma > 0.0) || !(cfg.tol > 0.0) {
        return Err(SvmError::Invalid(format!("C {}, gamma {} and tol {} must be positive", cfg.c, cfg.gamma, cfg.tol)));
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(SvmError::LengthMismatch { expected: d, got: r.len() });
    }

    let k = if n <= DENSE_LIMIT {
        let mut k = vec![0.0; n * n];
        k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (-cfg.gamma * squared_distance(&x[i], &x[j])).exp();
            }
        });
        Kernel::Dense { n, k }
    } else {
        Kernel::Lazy { x, gamma: cfg.gamma }
    };
    let mut s = Solver {
        k,
        y,
        alpha: vec![0.0; n],
        err: y.iter().map(|v| -v).collect(),
        b: 0.0,
        c: cfg.c,
        tol: cfg.tol,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };

    let max_passes = cfg.max_passes.unwrap_or(10 * n);
    let mut passes = 0;
    let mut examine_all = true;
    let mut changed = 0;
    while (changed > 0 || examine_all) && passes < max_passes {
        changed = 0;
        for i in 0..n {
            if examine_all || s.free(i) {
                changed += s.examine(i) as usize;
            }
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
        passes += 1;
    }
    let converged = changed == 0 && !examine_all;
    if !converged {
        warn!("SMO stopped after {passes} passes without meeting the KKT tolerance");
    }

    // Average the bias over free support vectors, which all satisfy y f = 1.
    let free: Vec<usize> = (0..n).filter(|&i| s.free(i)).collect();
    if !free.is_empty() {
        s.b -= free.iter().map(|&i| s.err[i]).sum::<f64>() / free.len() as f64;
    }
    let sv_indices: Vec<usize> = (0..n).filter(|&i| s.alpha[i] > 0.0).collect();
    Ok(SvmModel {
        support: sv_indices.iter().map(|&i| x[i].clone()).collect(),
        coef: sv_indices.iter().map(|&i| s.alpha[i] * y[i]).collect(),
        sv_indices,
        bias: s.b,
        gamma: cfg.gamma,
        c: cfg.c,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_bisected() {
        let x = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let y = vec![1.0, -1.0];
        let m = train_smo_binary(&x, &y, &SmoConfig::new(10.0, 0.5)).unwrap();
        assert_eq!(m.sv_indices, vec![0, 1]);
        assert!(m.decision(&[0.9, 0.0]).unwrap() > 0.0);
        assert!(m.decision(&[1.1, 0.0]).unwrap() < 0.0);
        assert!(m.decision(&[1.0, 0.0]).unwrap().abs() < 1e-9);
        assert_eq!(m.predict(&x[0]).unwrap(), 1.0);
        assert_eq!(m.predict(&x[1]).unwrap(), -1.0);
    }

    #[test]
    fn xor_is_separable() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let m = train_smo_binary(&x, &y, &SmoConfig::new(10.0, 1.0)).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap(), *yi);
        }
        assert!(m.converged);
    }

    #[test]
    fn equality_constraint_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        let m = train_smo_binary(&x, &y, &SmoConfig::new(1.0, 0.5)).unwrap();
        assert!(m.coef.iter().sum::<f64>().abs() < 1e-9);
        assert!(m.coef.iter().all(|c| c.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn rejects_single_class() {
        assert!(matches!(
            train_smo_binary(&[vec![0.0], vec![1.0]], &[1.0, 1.0], &SmoConfig::new(1.0, 1.0)),
            Err(SvmError::SingleClass)
        ));
    }
}
