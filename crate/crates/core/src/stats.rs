//! Small statistics helpers for experiment summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if xs.is_empty() || resamples == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::Domain("bootstrap needs data, resamples and a level in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("slope needs at least two paired points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all x values are equal".into()));
    }
    Ok(sxy / sxx)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `replication` of the experiment tagged `stream`:
/// `splitmix64(splitmix64(master ^ stream) + replication)`.
pub fn derive_seed(master: u64, stream: u64, replication: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream).wrapping_add(replication))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        assert!((ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 2000, 0.95, 1).unwrap();
        assert!(lo < 49.5 && hi > 49.5);
        assert!(hi - lo < 20.0);
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, 1, 3), derive_seed(7, 1, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 1, 4));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 2, 3));
        // Reference value of the SplitMix64 finalizer for input 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
