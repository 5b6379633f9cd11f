use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SvmError;

/// Number of samples kept when `count` samples are thinned by `factor`.
pub fn downselect_len(count: usize, factor: u64) -> usize {
    count.div_ceil(factor.max(1) as usize).max(1)
}

/// Number of samples kept for a proportion `fraction` of `count`.
pub fn fraction_len(count: usize, fraction: f64) -> usize {
    // The epsilon absorbs representation error, e.g. 6e8 * 0.001.
    (((count as f64) * fraction - 1e-6).ceil() as usize).clamp(1, count.max(1))
}

fn sample_sorted(count: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= count {
        return (0..count).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, count, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Uniform sample without replacement of `ceil(count / factor)` indices
/// into `0..count`, returned in increasing order.
pub fn downselect(count: usize, factor: u64, seed: u64) -> Result<Vec<usize>, SvmError> {
    if factor == 0 {
        return Err(SvmError::Invalid("down-selection factor must be at least 1".into()));
    }
    if count == 0 {
        return Err(SvmError::Invalid("nothing to down-select from".into()));
    }
    if factor as usize > count {
        warn!("down-selection factor {factor} exceeds the {count} available samples; keeping one");
    }
    Ok(sample_sorted(count, downselect_len(count, factor), seed))
}

/// Uniform sample of a proportion `fraction` in (0, 1] of `0..count`.
pub fn downselect_fraction(count: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, SvmError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SvmError::Invalid(format!("sample proportion {fraction} outside (0, 1]")));
    }
    if count == 0 {
        return Err(SvmError::Invalid("nothing to down-select from".into()));
    }
    Ok(sample_sorted(count, fraction_len(count, fraction), seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_factor_one() {
        assert_eq!(downselect(7, 1, 3).unwrap(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn sizes_and_order() {
        let s = downselect(10_000, 7, 1).unwrap();
        assert_eq!(s.len(), 1429);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, downselect(10_000, 7, 1).unwrap());
        assert_ne!(s, downselect(10_000, 7, 2).unwrap());
    }

    #[test]
    fn oversized_factor_keeps_one() {
        assert_eq!(downselect(5, 100, 0).unwrap().len(), 1);
        assert!(downselect(5, 0, 0).is_err());
    }

    #[test]
    fn fraction_arithmetic() {
        for (f, n) in [(0.001, 600_000), (0.0001, 60_000), (0.00001, 6_000), (0.000001, 600)] {
            assert_eq!(fraction_len(600_000_000, f), n);
        }
        assert_eq!(fraction_len(10, 0.25), 3);
    }
}
