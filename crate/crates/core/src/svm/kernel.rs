use super::SvmError;

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma * |u - v|^2)`.
pub fn rbf_kernel(u: &[f64], v: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if u.len() != v.len() {
        return Err(SvmError::LengthMismatch { expected: u.len(), got: v.len() });
    }
    if !(gamma > 0.0) {
        return Err(SvmError::Invalid(format!("kernel gamma {gamma} must be positive")));
    }
    Ok((-gamma * squared_distance(u, v)).exp())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn identical_vectors() {
        assert_eq!(rbf_kernel(&[0.3, -2.0], &[0.3, -2.0], 0.7).unwrap(), 1.0);
    }

    #[test]
    fn unit_distance() {
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(rbf_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(u in prop::collection::vec(-5.0f64..5.0, 6), v in prop::collection::vec(-5.0f64..5.0, 6), g in 0.01f64..3.0) {
            let a = rbf_kernel(&u, &v, g).unwrap();
            prop_assert_eq!(a, rbf_kernel(&v, &u, g).unwrap());
            prop_assert!(a > 0.0 || squared_distance(&u, &v) * g > 700.0);
            prop_assert!(a <= 1.0);
        }
    }
}
