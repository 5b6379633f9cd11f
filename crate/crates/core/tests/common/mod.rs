//! Oracles shared by the integration suites.
#![allow(dead_code)]

use ndsm_core::data::{generate_city, CityStyle, RasterTile};
use ndsm_core::tensor::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values at least `gap` apart in random order, so max-pooling and ReLU
/// kinks stay far from every finite-difference probe.
pub fn spread_tensor(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0 + 0.5) * gap).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    Tensor::from_vec(shape, v).unwrap()
}

/// Scalar function of graph inputs.
pub type Scalarized<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Var + 'a;

fn evaluate(inputs: &[Tensor<f64>], f: &Scalarized) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars);
    g.value(out).data()[0]
}

pub const FD_STEP: f64 = 1e-5;
/// Gradient magnitudes below this count as this in the relative error.
pub const FD_FLOOR: f64 = 1e-3;

/// Largest relative error between backprop and central differences over
/// every element of every input (or `limit` random elements per input).
pub fn max_gradient_error(inputs: &[Tensor<f64>], f: &Scalarized, limit: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let out = f(&mut g, &vars);
    g.backward(out, &mut ParamStore::new()).unwrap();
    let analytic: Vec<Vec<f64>> =
        vars.iter().zip(inputs).map(|(&v, t)| g.grad(v).map_or(vec![0.0; t.len()], |gr| gr.data().to_vec())).collect();
    let mut worst = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        let picks: Vec<usize> = if t.len() <= limit { (0..t.len()).collect() } else { (0..limit).map(|_| rng.gen_range(0..t.len())).collect() };
        for j in picks {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let numeric = (evaluate(&plus, f) - evaluate(&minus, f)) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// `sum(out * r)` for a fixed random `r`, turning any output into a scalar
/// whose gradient exercises every output element.
pub fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Var {
    let shape = g.value(out).shape().to_vec();
    let r = random_tensor(&mut rng(seed), &shape, -1.0, 1.0);
    let r = g.leaf(r);
    let m = ndsm_core::tensor::ops::mul(g, out, r).unwrap();
    ndsm_core::tensor::ops::sum(g, m)
}

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    (-gamma * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp()
}

/// Projection onto `{0 <= a <= c, sum(y a) = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project_feasible(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let h = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-m, m);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Soft-margin SVM dual solved by accelerated projected gradient.
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> QpSolution {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&x[i], &x[j], gamma)).collect()).collect();
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| q[i].iter().zip(a).map(|(qi, ai)| qi * ai).sum::<f64>() - 1.0).collect() };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let gz = grad(&z);
        let step: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project_feasible(&step, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next.iter().zip(&alpha).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        alpha = next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    let objective = alpha.iter().sum::<f64>()
        - 0.5 * (0..n).map(|i| (0..n).map(|j| alpha[i] * alpha[j] * q[i][j]).sum::<f64>()).sum::<f64>();
    let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| alpha[j] * y[j] * rbf(&x[j], &x[i], gamma)).sum()).collect();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-7 && alpha[i] < c - 1e-7).collect();
    let bias = if free.is_empty() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let at_upper = alpha[i] >= c - 1e-7;
            // y (g + b) >= 1 at the lower bound, <= 1 at the upper bound.
            if (y[i] > 0.0) != at_upper {
                lo = lo.max(y[i] - g[i]);
            } else {
                hi = hi.min(y[i] - g[i]);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            _ => 0.0,
        }
    } else {
        free.iter().map(|&i| y[i] - g[i]).sum::<f64>() / free.len() as f64
    };
    QpSolution { alpha, bias, objective }
}

pub fn oracle_decision(x: &[Vec<f64>], y: &[f64], s: &QpSolution, gamma: f64, probe: &[f64]) -> f64 {
    s.bias + x.iter().zip(y).zip(&s.alpha).map(|((xi, yi), ai)| ai * yi * rbf(xi, probe, gamma)).sum::<f64>()
}

/// Largest violation of the KKT conditions `y f(x) >= 1` (alpha = 0),
/// `= 1` (free) and `<= 1` (alpha = C).
pub fn kkt_violation(margins: &[f64], alpha: &[f64], c: f64) -> f64 {
    margins
        .iter()
        .zip(alpha)
        .map(|(&m, &a)| {
            if a <= 1e-9 {
                (1.0 - m).max(0.0)
            } else if a >= c - 1e-9 {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Random binary SVM instance with both labels present.
pub fn svm_instance(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, f64, f64) {
    let mut r = rng(seed);
    let n = r.gen_range(4..=30);
    let d = r.gen_range(1..=4);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<f64> = x.iter().map(|p| if p[0] + 0.5 * r.gen_range(-1.0..1.0) > 0.0 { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let c = [0.5, 1.0, 10.0][r.gen_range(0..3)];
    let gamma = r.gen_range(0.2..2.0);
    (x, y, c, gamma)
}

/// Small style-A and style-B cities sharing nothing but the generator.
pub fn cities(n_a: usize, n_b: usize, size: usize) -> (Vec<RasterTile>, Vec<RasterTile>) {
    (generate_city(&CityStyle::a(), n_a, size, 0).unwrap(), generate_city(&CityStyle::b(), n_b, size, 1000).unwrap())
}
pub mod suites;
