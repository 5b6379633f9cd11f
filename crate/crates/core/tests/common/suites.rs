//! Check suites run both by their own test targets and by the acceptance
//! run.

use ndsm_core::net::{binary_weighted_nll, softmax_weighted_nll, ClassWeights, Reduction};
use ndsm_core::svm::{train_smo_binary, SmoConfig};
use ndsm_core::tensor::ops::{add, batchnorm2d, conv2d, maxpool_argmax, maxpool_forward, maxunpool, mul, relu, sum, BN_EPS};
use ndsm_core::tensor::{BnMode, Graph, RunningStats, Var};
use rand::Rng;

use super::*;

/// Worst relative finite-difference error per layer or loss for one seed.
pub fn gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let b = r.gen_range(1..=2);
    let cin = r.gen_range(1..=3);
    let cout = r.gen_range(1..=4);
    let (h, w) = (2 * r.gen_range(2..=4), 2 * r.gen_range(2..=4));
    let p = seed.wrapping_mul(31);
    let limit = 60;
    let mut out = Vec::new();

    let x = random_tensor(&mut r, &[b, cin, h, w], -1.0, 1.0);
    let k = random_tensor(&mut r, &[cout, cin, 3, 3], -0.5, 0.5);
    let bias = random_tensor(&mut r, &[cout], -0.5, 0.5);
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let y = conv2d(g, v[0], v[1], v[2]).unwrap();
        project(g, y, p)
    };
    out.push(("conv2d", max_gradient_error(&[x.clone(), k, bias], &f, limit, &mut r)));

    let gamma = random_tensor(&mut r, &[cin], 0.5, 1.5);
    let beta = random_tensor(&mut r, &[cin], -0.5, 0.5);
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let mut stats = RunningStats::new(cin);
        let y = batchnorm2d(g, v[0], v[1], v[2], &mut stats, BnMode::Train, BN_EPS).unwrap();
        project(g, y, p)
    };
    out.push(("batchnorm2d/train", max_gradient_error(&[x.clone(), gamma.clone(), beta.clone()], &f, limit, &mut r)));

    let mean: Vec<f64> = (0..cin).map(|_| r.gen_range(-0.3..0.3)).collect();
    let var: Vec<f64> = (0..cin).map(|_| r.gen_range(0.5..2.0)).collect();
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let mut stats = RunningStats { mean: mean.clone(), var: var.clone(), initialized: true };
        let y = batchnorm2d(g, v[0], v[1], v[2], &mut stats, BnMode::Eval, BN_EPS).unwrap();
        project(g, y, p)
    };
    out.push(("batchnorm2d/eval", max_gradient_error(&[x.clone(), gamma, beta], &f, limit, &mut r)));

    let spread = spread_tensor(&mut r, &[b, cin, h, w], 0.01);
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let y = relu(g, v[0]).unwrap();
        project(g, y, p)
    };
    out.push(("relu", max_gradient_error(std::slice::from_ref(&spread), &f, limit, &mut r)));

    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let (y, _) = maxpool_argmax(g, v[0]).unwrap();
        project(g, y, p)
    };
    out.push(("maxpool", max_gradient_error(std::slice::from_ref(&spread), &f, limit, &mut r)));

    let (_, idx) = maxpool_forward(&spread).unwrap();
    let pooled = random_tensor(&mut r, &idx.pooled_shape(), -1.0, 1.0);
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let y = maxunpool(g, v[0], &idx).unwrap();
        project(g, y, p)
    };
    out.push(("maxunpool", max_gradient_error(&[pooled], &f, limit, &mut r)));

    let other = random_tensor(&mut r, &[b, cin, h, w], -1.0, 1.0);
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let s = add(g, v[0], v[1]).unwrap();
        let m = mul(g, s, v[0]).unwrap();
        sum(g, m)
    };
    out.push(("add/mul/sum", max_gradient_error(&[x, other], &f, limit, &mut r)));

    for (n, name) in [(6usize, "softmax_weighted_nll"), (2, "binary_weighted_nll")] {
        let logits = random_tensor(&mut r, &[b, n, h, w], -2.0, 2.0);
        let labels: Vec<u8> = (0..b * h * w).map(|_| r.gen_range(0..n as u8)).collect();
        let weights = ClassWeights { weights: (0..n).map(|_| r.gen_range(0.5..3.0)).collect(), frequencies: vec![1.0 / n as f64; n] };
        for reduction in [Reduction::Sum, Reduction::Mean, Reduction::WeightedMean] {
            let f = |g: &mut Graph<f64>, v: &[Var]| {
                if n == 2 {
                    binary_weighted_nll(g, v[0], &labels, &weights, reduction).unwrap()
                } else {
                    softmax_weighted_nll(g, v[0], &labels, &weights, reduction).unwrap()
                }
            };
            out.push((name, max_gradient_error(std::slice::from_ref(&logits), &f, limit, &mut r)));
        }
    }
    out
}

/// SMO against the projected-gradient oracle on one random instance:
/// (objective gap, worst KKT violation, probes with disagreeing signs).
pub fn smo_vs_oracle(seed: u64) -> (f64, f64, usize) {
    let (x, y, c, gamma) = svm_instance(seed);
    let m = train_smo_binary(&x, &y, &SmoConfig { seed, ..SmoConfig::new(c, gamma) }).unwrap();
    let alpha = m.alphas(x.len());
    let smo_obj = ndsm_core::svm::dual_objective(&x, &y, &alpha, gamma);
    let oracle = qp_oracle(&x, &y, c, gamma);
    let margins: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi * m.decision(xi).unwrap()).collect();
    let kkt = kkt_violation(&margins, &alpha, c);
    let mut r = rng(seed ^ 0xabc);
    let d = x[0].len();
    let mut disagree = 0;
    for _ in 0..100 {
        let probe: Vec<f64> = (0..d).map(|_| r.gen_range(-2.5..2.5)).collect();
        let o = oracle_decision(&x, &y, &oracle, gamma, &probe);
        let s = m.decision(&probe).unwrap();
        // Probes on the boundary itself have no meaningful sign.
        if o.abs() > 1e-3 && (o > 0.0) != (s > 0.0) {
            disagree += 1;
        }
    }
    ((smo_obj - oracle.objective).abs(), kkt, disagree)
}

pub type Reencode = Box<dyn Fn(&[u8]) -> Option<Vec<u8>>>;

/// One encoded sample of every binary format plus a decoder that reports
/// whether the bytes were accepted.
pub struct FormatCase {
    pub name: &'static str,
    pub bytes: Vec<u8>,
    pub reencode: Reencode,
}

pub fn format_cases() -> Vec<FormatCase> {
    use ndsm_core::data::rseg::{decode, encode_labels, encode_raster, RsegData};
    use ndsm_core::data::{ChannelMode, NormStats};
    use ndsm_core::net::{decode_checkpoint, encode_checkpoint, Architecture, InputConfig, NetworkModel, NetworkSpec};
    use ndsm_core::svm::{decode_svm, encode_svm, sample_features, train_one_vs_one, OvoConfig};

    let (a, _) = cities(2, 0, 32);
    let spectral = a[0].spectral.clone().unwrap();
    let labels = a[0].labels.clone();
    let norm = NormStats::compute(&a).unwrap();
    let spec = NetworkSpec::new(Architecture::SegNetLite, 4, 6).unwrap();
    let net = NetworkModel::<f32>::build(spec, InputConfig { mode: ChannelMode::Fused, norm }, 1).unwrap();
    let idx: Vec<usize> = (0..2 * 32 * 32).step_by(17).collect();
    let (rows, y) = sample_features(&a, &idx, ChannelMode::Fused, |c| c).unwrap();
    let svm = train_one_vs_one(&rows, &y, ChannelMode::Fused, &OvoConfig::default()).unwrap();

    vec![
        FormatCase {
            name: "rseg f32",
            bytes: encode_raster(&spectral),
            reencode: Box::new(|b| match decode(b).ok()? {
                RsegData::F32(r) => Some(encode_raster(&r)),
                RsegData::Labels(_) => None,
            }),
        },
        FormatCase {
            name: "rseg labels",
            bytes: encode_labels(&labels),
            reencode: Box::new(|b| match decode(b).ok()? {
                RsegData::Labels(l) => Some(encode_labels(&l)),
                RsegData::F32(_) => None,
            }),
        },
        FormatCase {
            name: "checkpoint",
            bytes: encode_checkpoint(&net),
            reencode: Box::new(|b| decode_checkpoint::<f32>(b).ok().map(|m| encode_checkpoint(&m))),
        },
        FormatCase {
            name: "svm",
            // Support vectors are stored as f32; the first write quantizes.
            bytes: encode_svm(&decode_svm(&encode_svm(&svm)).unwrap()),
            reencode: Box::new(|b| decode_svm(b).ok().map(|m| encode_svm(&m))),
        },
    ]
}

/// Flips one random bit per trial; returns how many corrupted copies the
/// decoder rejected.
pub fn corruption_detected(case: &FormatCase, trials: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    (0..trials)
        .filter(|_| {
            let mut b = case.bytes.clone();
            let i = r.gen_range(0..b.len());
            b[i] ^= 1 << r.gen_range(0..8);
            (case.reencode)(&b).is_none()
        })
        .count()
}

/// Writes a two-city manifest to `dir`, reads it back and compares the
/// manifest text and every tile.
pub fn manifest_round_trip(dir: &std::path::Path) -> bool {
    use ndsm_core::data::{write_city, DatasetManifest};
    let (a, _) = cities(3, 0, 32);
    let (m, path) = write_city(dir, &a, 1).unwrap();
    let back = DatasetManifest::read(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    back == m && back.render() == text && back.load(None).unwrap() == a
}
