use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Gaussian kernel density over the state interval [0, 1], truncated and
/// renormalized so that all mass lies inside the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDensity {
    /// Distinct observed states with their multiplicities.
    pub centers: Vec<(f64, usize)>,
    pub bandwidth: f64,
    /// Total number of observations.
    pub count: usize,
    norm: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn silverman(states: &[f64]) -> f64 {
    let n = states.len() as f64;
    let mean = states.iter().sum::<f64>() / n;
    let var = states.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = states.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        0.1
    }
}

/// Fits a density to one observed state per period.
pub fn fit_state_density(states: &[f64]) -> Result<StateDensity> {
    if states.is_empty() {
        return Err(Error::Domain("no states to fit a density to".into()));
    }
    if let Some(s) = states.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Domain(format!("state {s} outside [0, 1]")));
    }
    let bandwidth = silverman(states);
    let mut sorted = states.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<(f64, usize)> = Vec::new();
    for s in sorted {
        match centers.last_mut() {
            Some((c, m)) if *c == s => *m += 1,
            _ => centers.push((s, 1)),
        }
    }
    let mut density = StateDensity { centers, bandwidth, count: states.len(), norm: 1.0 };
    density.norm = density.raw_cdf(1.0) - density.raw_cdf(0.0);
    Ok(density)
}

impl StateDensity {
    fn raw_cdf(&self, x: f64) -> f64 {
        let total: f64 = self
            .centers
            .iter()
            .map(|&(c, m)| m as f64 * std_normal_cdf((x - c) / self.bandwidth))
            .sum();
        total / self.count as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        ((self.raw_cdf(x) - self.raw_cdf(0.0)) / self.norm).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let h = self.bandwidth;
        let total: f64 = self
            .centers
            .iter()
            .map(|&(c, m)| {
                let z = (x - c) / h;
                m as f64 * (-0.5 * z * z).exp()
            })
            .sum();
        total / (self.count as f64 * h * (2.0 * std::f64::consts::PI).sqrt() * self.norm)
    }

    /// Midpoint cells over [lo, hi] with exact masses from CDF differences.
    pub fn quadrature(&self, lo: f64, hi: f64, cells: usize) -> Vec<(f64, f64)> {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        if hi <= lo || cells == 0 {
            return Vec::new();
        }
        let width = (hi - lo) / cells as f64;
        let mut prev = self.cdf(lo);
        (0..cells)
            .map(|i| {
                let right = if i + 1 == cells { hi } else { lo + width * (i + 1) as f64 };
                let next = self.cdf(right);
                let cell = (lo + width * (i as f64 + 0.5), next - prev);
                prev = next;
                cell
            })
            .collect()
    }

    /// One draw: a kernel center picked by multiplicity plus Gaussian noise,
    /// redrawn until it lands in [0, 1].
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        loop {
            let mut pick = rng.random_range(0..self.count);
            let mut center = self.centers[0].0;
            for &(c, m) in &self.centers {
                if pick < m {
                    center = c;
                    break;
                }
                pick -= m;
            }
            let z: f64 = rng.sample(StandardNormal);
            let x = center + self.bandwidth * z;
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.quadrature(0.0, 1.0, 2000).iter().map(|(x, p)| x * p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_spans_the_unit_interval() {
        let d = fit_state_density(&[0.1, 0.2, 0.2, 0.7, 0.9]).unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(1.0), 1.0);
        let mut last = 0.0;
        for i in 1..100 {
            let c = d.cdf(i as f64 / 100.0);
            assert!(c >= last);
            last = c;
        }
        let mass: f64 = d.quadrature(0.0, 1.0, 1000).iter().map(|c| c.1).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let d = fit_state_density(&[0.05, 0.4, 0.41, 0.6, 0.95]).unwrap();
        let n = 20_000;
        let integral: f64 = (0..n).map(|i| d.pdf((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((integral - 1.0).abs() < 1e-6);
    }

    #[test]
    fn silverman_bandwidth_for_a_known_sample() {
        let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let d = fit_state_density(&xs).unwrap();
        let sd = (0.1f64).sqrt();
        // Linear-interpolated IQR is 0.4, so σ ≈ 0.316 < 0.4/1.34 ≈ 0.299 is false.
        let expected = 0.9 * sd.min(0.4 / 1.34) * 5f64.powf(-0.2);
        assert!((d.bandwidth - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_falls_back() {
        let d = fit_state_density(&[0.5; 10]).unwrap();
        assert_eq!(d.bandwidth, 0.1);
        assert_eq!(d.centers, vec![(0.5, 10)]);
        assert!((d.cdf(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_states() {
        assert!(fit_state_density(&[0.5, 1.5]).is_err());
        assert!(fit_state_density(&[]).is_err());
    }
}
