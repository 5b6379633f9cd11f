mod common;

use ndsm_core::data::{crop_fraction, read_raster, write_raster, CropMode, LabelRaster, Raster, RasterTile};
use ndsm_core::eval::{balanced_metrics, ConfusionMatrix};
use ndsm_core::net::{softmax, softmax_weighted_nll, ClassWeights, Reduction};
use ndsm_core::svm::{downselect, downselect_len, rbf_kernel, PixelPool};
use ndsm_core::tensor::ops::{maxpool_forward, maxunpool_forward};
use ndsm_core::tensor::{Graph, Tensor};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = ConfusionMatrix> {
    prop::collection::vec(0u64..50, n * n).prop_map(move |c| ConfusionMatrix::from_counts(n, c).unwrap())
}

proptest! {
    #[test]
    fn binary_rates_are_consistent(cm in matrix(2)) {
        let r = balanced_metrics(&cm);
        if let Some(b) = r.binary {
            prop_assert!((b.fnr + b.recall - 1.0).abs() <= 1e-9);
            let specificity = cm.get(0, 0) as f64 / cm.row_sum(0) as f64;
            prop_assert!((b.fpr + specificity - 1.0).abs() <= 1e-9);
            if b.precision + b.recall > 0.0 {
                let h = 2.0 * b.precision * b.recall / (b.precision + b.recall);
                prop_assert!((b.f1 - h).abs() <= 1e-9);
            }
            for v in [b.accuracy, b.precision, b.recall, b.f1, b.fnr, b.fpr] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        } else {
            prop_assert!(cm.row_sum(0) == 0 || cm.row_sum(1) == 0);
        }
    }

    #[test]
    fn metrics_are_scale_invariant(cm in matrix(4), k in 1u64..20) {
        let scaled = ConfusionMatrix::from_counts(4, cm.counts().iter().map(|c| c * k).collect()).unwrap();
        let (a, b) = (balanced_metrics(&cm), balanced_metrics(&scaled));
        prop_assert!((a.total - b.total).abs() <= 1e-12);
        for (x, y) in a.per_class.iter().zip(&b.per_class) {
            prop_assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn balanced_matrix_needs_no_reweighting(rows in prop::collection::vec(prop::collection::vec(0u64..20, 3), 3)) {
        // Pad each row to the same total so class masses are already equal.
        let target = rows.iter().map(|r| r.iter().sum::<u64>()).max().unwrap() + 1;
        let mut counts = Vec::new();
        for (t, r) in rows.iter().enumerate() {
            let mut r = r.clone();
            r[t] += target - r.iter().sum::<u64>();
            counts.extend(r);
        }
        let cm = ConfusionMatrix::from_counts(3, counts).unwrap();
        let raw_recall: f64 = (0..3).map(|k| cm.get(k, k) as f64 / target as f64).sum::<f64>() / 3.0;
        let raw_accuracy = (0..3).map(|k| cm.get(k, k)).sum::<u64>() as f64 / cm.total() as f64;
        let r = balanced_metrics(&cm);
        prop_assert!((r.total - raw_recall).abs() <= 1e-9);
        prop_assert!((r.total - raw_accuracy).abs() <= 1e-9);
    }

    #[test]
    fn accumulation_is_associative(a in prop::collection::vec((0u8..3, 0u8..3), 1..40), b in prop::collection::vec((0u8..3, 0u8..3), 1..40)) {
        let raster = |v: &[(u8, u8)], first: bool| {
            LabelRaster::new(1, v.len(), v.iter().map(|p| if first { p.0 } else { p.1 }).collect()).unwrap()
        };
        let mut split = ConfusionMatrix::new(3);
        split.accumulate(&raster(&a, false), &raster(&a, true)).unwrap();
        split.accumulate(&raster(&b, false), &raster(&b, true)).unwrap();
        let joined: Vec<(u8, u8)> = a.iter().chain(&b).copied().collect();
        let mut whole = ConfusionMatrix::new(3);
        whole.accumulate(&raster(&joined, false), &raster(&joined, true)).unwrap();
        prop_assert_eq!(split.total(), joined.len() as u64);
        prop_assert_eq!(split, whole);
    }

    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-30.0f64..30.0, 24)) {
        let t = Tensor::from_vec(&[2, 3, 2, 2], v).unwrap();
        let p = softmax(&t).unwrap();
        for b in 0..2 {
            for i in 0..4 {
                let s: f64 = (0..3).map(|k| p.data()[b * 12 + k * 4 + i]).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loss_scales_with_class_weights(v in prop::collection::vec(-3.0f64..3.0, 12), labels in prop::collection::vec(0u8..3, 4), k in 0.1f64..10.0) {
        let w = ClassWeights { weights: vec![1.0, 2.0, 0.5], frequencies: vec![1.0 / 3.0; 3] };
        let loss = |w: &ClassWeights| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::from_vec(&[1, 3, 2, 2], v.clone()).unwrap());
            let l = softmax_weighted_nll(&mut g, x, &labels, w, Reduction::Sum).unwrap();
            g.value(l).data()[0]
        };
        let (a, b) = (loss(&w), loss(&w.scaled(k)));
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn unpool_then_pool_is_identity(x in prop::collection::vec(-1.0f64..1.0, 64), y in prop::collection::vec(0.0f64..5.0, 16)) {
        let x = Tensor::from_vec(&[1, 1, 8, 8], x).unwrap();
        let (_, idx) = maxpool_forward(&x).unwrap();
        let y = Tensor::from_vec(&[1, 1, 4, 4], y).unwrap();
        let up = maxunpool_forward(&y, &idx).unwrap();
        let (back, _) = maxpool_forward(&up).unwrap();
        prop_assert_eq!(back, y);
    }

    #[test]
    fn downselect_keeps_ceiling_share(count in 1usize..5000, factor in 1u64..300, seed in any::<u64>()) {
        let idx = downselect(count, factor, seed).unwrap();
        prop_assert_eq!(idx.len(), downselect_len(count, factor));
        prop_assert_eq!(idx.len(), count.div_ceil(factor as usize).max(1));
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(idx.iter().all(|&i| i < count));
    }

    #[test]
    fn rbf_kernel_is_symmetric_and_bounded(u in prop::collection::vec(-5.0f64..5.0, 6), v in prop::collection::vec(-5.0f64..5.0, 6), g in 0.01f64..3.0) {
        let a = rbf_kernel(&u, &v, g).unwrap();
        prop_assert_eq!(a, rbf_kernel(&v, &u, g).unwrap());
        prop_assert!(a >= 0.0);
        prop_assert!(a <= 1.0);
        prop_assert_eq!(rbf_kernel(&u, &u, g).unwrap(), 1.0);
    }

    #[test]
    fn crops_stay_inside_and_keep_layers_aligned(side in 64usize..160, f in 0.3f64..1.0, seed in any::<u64>()) {
        let n = side & !1;
        prop_assume!((n as f64 * f) as usize >= 34);
        let plane: Vec<f32> = (0..n * n).map(|i| i as f32).collect();
        let tile = RasterTile {
            id: "p".into(),
            city: "c".into(),
            spectral: Some(Raster::new(3, n, n, plane.iter().chain(&plane).chain(&plane).copied().collect()).unwrap()),
            dsm: None,
            dtm: None,
            ndsm: Some(Raster::new(1, n, n, plane.clone()).unwrap()),
            labels: LabelRaster::new(n, n, (0..n * n).map(|i| (i % 6) as u8).collect()).unwrap(),
            gsd_cm: 9.0,
        };
        let c = crop_fraction(&tile, f, CropMode::PerAxis, seed).unwrap();
        let (h, w) = c.dims();
        prop_assert!(h <= n && w <= n && h % 2 == 0);
        // The nDSM value encodes the source pixel, so alignment is checkable.
        let ndsm = c.ndsm.as_ref().unwrap();
        let origin = ndsm.at(0, 0, 0) as usize;
        prop_assert_eq!(c.labels.at(0, 0) as usize, origin % 6);
        prop_assert_eq!(c.spectral.as_ref().unwrap().at(2, h - 1, w - 1), ndsm.at(0, h - 1, w - 1));
        prop_assert!(origin / n + h <= n && origin % n + w <= n);
    }

    #[test]
    fn pixel_pool_locates_every_index(sizes in prop::collection::vec((1usize..6, 1usize..6), 1..5), pick in any::<prop::sample::Index>()) {
        let tiles: Vec<RasterTile> = sizes.iter().map(|&(h, w)| RasterTile {
            id: "t".into(),
            city: "c".into(),
            spectral: None,
            dsm: None,
            dtm: None,
            ndsm: None,
            labels: LabelRaster::new(h, w, vec![0; h * w]).unwrap(),
            gsd_cm: 9.0,
        }).collect();
        let pool = PixelPool::new(&tiles);
        prop_assert_eq!(pool.len(), sizes.iter().map(|(h, w)| h * w).sum::<usize>());
        let i = pick.index(pool.len());
        let (t, y, x) = pool.locate(i);
        let before: usize = sizes[..t].iter().map(|(h, w)| h * w).sum();
        prop_assert_eq!(before + y * sizes[t].1 + x, i);
    }

    #[test]
    fn rasters_round_trip_through_files(c in 1usize..4, h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let raster = Raster::new(c, h, w, (0..c * h * w).map(|_| r.gen_range(-100.0f32..100.0)).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.rseg");
        write_raster(&path, &raster).unwrap();
        let back = read_raster(&path).unwrap();
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), raster.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let mut bytes = std::fs::read(&path).unwrap();
        let k = r.gen_range(0..bytes.len());
        bytes[k] ^= 1 << r.gen_range(0..8);
        std::fs::write(&path, &bytes).unwrap();
        prop_assert!(read_raster(&path).is_err());
    }
}
