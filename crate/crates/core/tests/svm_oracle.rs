mod common;

use common::suites::smo_vs_oracle;
use common::*;
use ndsm_core::svm::{train_smo_binary, SmoConfig};

#[test]
fn smo_matches_projected_gradient_oracle() {
    for seed in 0..25 {
        let (gap, kkt, disagree) = smo_vs_oracle(seed);
        assert!(gap <= 1e-4, "seed {seed}: dual objective gap {gap:e}");
        assert!(kkt <= 1e-2, "seed {seed}: KKT violation {kkt:e}");
        assert_eq!(disagree, 0, "seed {seed}");
    }
}

#[test]
fn multipliers_stay_feasible() {
    for seed in 100..140 {
        let (x, y, c, gamma) = svm_instance(seed);
        let m = train_smo_binary(&x, &y, &SmoConfig::new(c, gamma)).unwrap();
        let alpha = m.alphas(x.len());
        assert!(alpha.iter().all(|&a| (0.0..=c + 1e-12).contains(&a)));
        let balance: f64 = alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() <= 1e-6, "seed {seed}: sum(alpha y) = {balance:e}");
        for (&i, _) in m.sv_indices.iter().zip(&m.coef) {
            if alpha[i] < c - 1e-9 {
                let margin = y[i] * m.decision(&x[i]).unwrap();
                assert!((margin - 1.0).abs() <= 10.0 * 1e-3, "seed {seed}: free margin {margin}");
            }
        }
    }
}

#[test]
fn oracle_solves_two_point_problem() {
    // Two points, opposite labels: alpha = 1 / (1 - k) each, bias 0.
    let x = vec![vec![0.0], vec![1.0]];
    let y = vec![1.0, -1.0];
    let k = rbf(&x[0], &x[1], 1.0);
    let s = qp_oracle(&x, &y, 100.0, 1.0);
    for a in &s.alpha {
        assert!((a - 1.0 / (1.0 - k)).abs() < 1e-9);
    }
    assert!(s.bias.abs() < 1e-9);
}
