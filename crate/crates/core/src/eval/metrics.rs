use crate::data::LabelRaster;

use super::EvalError;

/// `counts[truth * n + predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self, EvalError> {
        if counts.len() != n * n {
            return Err(EvalError::Invalid(format!("{} counts for a {n}x{n} matrix", counts.len())));
        }
        Ok(Self { n, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.n..(truth + 1) * self.n].iter().sum()
    }

    pub fn add(&mut self, truth: u8, predicted: u8) -> Result<(), EvalError> {
        let (t, p) = (truth as usize, predicted as usize);
        if t >= self.n || p >= self.n {
            return Err(EvalError::Invalid(format!("label pair ({t}, {p}) outside {} classes", self.n)));
        }
        self.counts[t * self.n + p] += 1;
        Ok(())
    }

    pub fn accumulate(&mut self, pred: &LabelRaster, truth: &LabelRaster) -> Result<(), EvalError> {
        if pred.dims() != truth.dims() {
            return Err(EvalError::Invalid(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
        }
        for (&p, &t) in pred.data.iter().zip(&truth.data) {
            self.add(t, p)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), EvalError> {
        if other.n != self.n {
            return Err(EvalError::Invalid(format!("merging {}-class into {}-class matrix", other.n, self.n)));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Rates of the positive class (id 1) in a two-class problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// Class-balanced metrics. Entries are `None` for classes without any
/// ground-truth pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// One-vs-rest balanced accuracy `(TPR + TNR) / 2`.
    pub per_class: Vec<Option<f64>>,
    /// Row-normalized diagonal.
    pub per_class_recall: Vec<Option<f64>>,
    /// Mean recall over defined classes.
    pub total: f64,
    pub binary: Option<BinaryMetrics>,
}

/// Human-readable statement of the definitions, written into reports.
pub const DEFINITIONS: &str = "rows of the confusion matrix are rescaled to equal mass; \
per-class accuracy = one-vs-rest balanced accuracy (TPR+TNR)/2; total = mean per-class recall; \
binary rates are computed on the rescaled matrix with class 1 positive";

/// Metrics on the confusion matrix with every non-empty truth row rescaled
/// to unit mass.
pub fn balanced_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let n = cm.n;
    let rows: Vec<Option<Vec<f64>>> = (0..n)
        .map(|t| {
            let s = cm.row_sum(t);
            (s > 0).then(|| (0..n).map(|p| cm.get(t, p) as f64 / s as f64).collect())
        })
        .collect();
    let defined = rows.iter().filter(|r| r.is_some()).count();
    let recall: Vec<Option<f64>> = rows.iter().enumerate().map(|(k, r)| r.as_ref().map(|r| r[k])).collect();
    let per_class = (0..n)
        .map(|k| {
            let tpr = recall[k]?;
            let others: Vec<f64> = rows.iter().enumerate().filter(|&(t, _)| t != k).filter_map(|(_, r)| r.as_ref().map(|r| 1.0 - r[k])).collect();
            let tnr = if others.is_empty() { 1.0 } else { others.iter().sum::<f64>() / others.len() as f64 };
            Some((tpr + tnr) / 2.0)
        })
        .collect();
    let total = if defined == 0 { 0.0 } else { recall.iter().flatten().sum::<f64>() / defined as f64 };
    let binary = match (n, &rows[..]) {
        (2, [Some(r0), Some(r1)]) => {
            let (tn, fp, fn_, tp) = (r0[0], r0[1], r1[0], r1[1]);
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = tp;
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            Some(BinaryMetrics { accuracy: (tp + tn) / 2.0, precision, recall, f1, fnr: fn_, fpr: fp })
        }
        _ => None,
    };
    MetricsReport { per_class, per_class_recall: recall, total, binary }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr(d: Vec<u8>) -> LabelRaster {
        LabelRaster::new(1, d.len(), d).unwrap()
    }

    #[test]
    fn perfect_predictor() {
        let mut cm = ConfusionMatrix::new(2);
        let t = lr(vec![0, 1, 1, 0, 1]);
        cm.accumulate(&t, &t).unwrap();
        assert_eq!(cm.get(0, 1) + cm.get(1, 0), 0);
        let m = balanced_metrics(&cm);
        assert_eq!(m.total, 1.0);
        let b = m.binary.unwrap();
        assert_eq!((b.accuracy, b.precision, b.recall, b.f1, b.fnr, b.fpr), (1.0, 1.0, 1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn hand_two_by_two() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&lr(vec![1, 0, 0, 1]), &lr(vec![1, 1, 0, 0])).unwrap();
        assert_eq!(cm.counts(), &[1, 1, 1, 1]);
    }

    #[test]
    fn reweighted_binary_by_hand() {
        // truth 0: 90 TN, 10 FP; truth 1: 2 FN, 8 TP.
        let cm = ConfusionMatrix::from_counts(2, vec![90, 10, 2, 8]).unwrap();
        let b = balanced_metrics(&cm).binary.unwrap();
        let (tn, fp, fn_, tp) = (0.9, 0.1, 0.2, 0.8);
        let p = tp / (tp + fp);
        assert!((b.precision - p).abs() < 1e-9);
        assert!((b.recall - 0.8).abs() < 1e-9);
        assert!((b.f1 - 2.0 * p * 0.8 / (p + 0.8)).abs() < 1e-9);
        assert!((b.accuracy - (tp + tn) / 2.0).abs() < 1e-9);
        assert!((b.fnr - fn_).abs() < 1e-9 && (b.fpr - fp).abs() < 1e-9);
    }

    #[test]
    fn empty_row_is_undefined() {
        let cm = ConfusionMatrix::from_counts(3, vec![5, 0, 0, 0, 0, 0, 1, 0, 4]).unwrap();
        let m = balanced_metrics(&cm);
        assert_eq!(m.per_class[1], None);
        assert!((m.total - 0.9).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(cm.accumulate(&lr(vec![0, 1]), &lr(vec![0])).is_err());
    }
}
