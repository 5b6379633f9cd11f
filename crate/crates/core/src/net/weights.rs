use crate::data::LabelRaster;

use super::NetError;

/// What to do when a class never occurs in the training labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AbsentClassPolicy {
    #[default]
    Error,
    /// Give the class weight 0 so it drops out of the loss.
    Exclude,
}

/// Inverse-frequency pixel weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl ClassWeights {
    /// All weights 1; frequencies uniform.
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0; n], frequencies: vec![1.0 / n as f64; n] }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { weights: self.weights.iter().map(|w| w * factor).collect(), frequencies: self.frequencies.clone() }
    }
}

/// `w_i = 1 / f_i`, where `f_i` is the share of pixels labelled `i`.
pub fn compute_class_weights<'a>(
    labels: impl IntoIterator<Item = &'a LabelRaster>,
    n: usize,
    policy: AbsentClassPolicy,
) -> Result<ClassWeights, NetError> {
    let mut counts = vec![0u64; n];
    for l in labels {
        for &c in &l.data {
            let slot = counts
                .get_mut(c as usize)
                .ok_or_else(|| NetError::InvalidInput(format!("label {c} outside {n} classes")))?;
            *slot += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(NetError::InvalidInput("no labelled pixels".into()));
    }
    let mut weights = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 && policy == AbsentClassPolicy::Error {
            return Err(NetError::AbsentClass(k));
        }
        let f = c as f64 / total as f64;
        frequencies.push(f);
        weights.push(if c == 0 { 0.0 } else { 1.0 / f });
    }
    Ok(ClassWeights { weights, frequencies })
}
