use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reservation utility per stage for a searching agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservationSchedule {
    pub values: Vec<f64>,
    /// Discount used when the schedule comes from the Bellman fixed point.
    pub discount: Option<f64>,
}

impl ReservationSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("reservation {v} must be finite and nonnegative")));
        }
        Ok(ReservationSchedule { values, discount: None })
    }

    /// `base − slope·ln k`: drops fast early and flattens later.
    pub fn convex(stages: usize, base: f64, slope: f64) -> Self {
        let values = (1..=stages).map(|k| (base - slope * (k as f64).ln()).max(0.0)).collect();
        ReservationSchedule { values, discount: None }
    }

    /// `base + slope·ln((N + 1 − k)/N)`: stays high and drops late.
    pub fn concave(stages: usize, base: f64, slope: f64) -> Self {
        let n = stages as f64;
        let values = (1..=stages)
            .map(|k| (base + slope * ((n + 1.0 - k as f64) / n).ln()).max(0.0))
            .collect();
        ReservationSchedule { values, discount: None }
    }

    /// Reservation at a 1-based stage.
    pub fn at(&self, stage: usize) -> Result<f64> {
        stage
            .checked_sub(1)
            .and_then(|k| self.values.get(k))
            .copied()
            .ok_or_else(|| Error::Domain(format!("stage {stage} outside a {}-stage schedule", self.values.len())))
    }
}

/// One meeting: the agent pulls when the arm clears its reservation, the arm
/// accepts when the agent clears the arm's. Returns whether they match.
pub fn patient_strategy_step(
    agent_gain: f64,
    arm_gain: f64,
    schedule: &ReservationSchedule,
    stage: usize,
    arm_reservation: f64,
) -> Result<bool> {
    Ok(agent_gain >= schedule.at(stage)? && arm_gain >= arm_reservation)
}

/// Paired draws of what a searching agent gains from a random arm and what
/// that arm gains from the agent. Fixed across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanSamples {
    pub agent_gains: Vec<f64>,
    pub arm_gains: Vec<f64>,
}

impl BellmanSamples {
    pub fn draw(
        agent_dist: impl Fn(&mut ChaCha8Rng) -> f64,
        arm_dist: impl Fn(&mut ChaCha8Rng) -> f64,
        count: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut agent_gains = Vec::with_capacity(count);
        let mut arm_gains = Vec::with_capacity(count);
        for _ in 0..count {
            agent_gains.push(agent_dist(&mut rng));
            arm_gains.push(arm_dist(&mut rng));
        }
        BellmanSamples { agent_gains, arm_gains }
    }

    /// Uniform gains on `[0, scale]` for both sides.
    pub fn uniform(scale: f64, count: usize, seed: u64) -> Self {
        Self::draw(|r| r.random::<f64>() * scale, |r| r.random::<f64>() * scale, count, seed)
    }
}

/// Reservation values at the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellmanSolution {
    pub agent: f64,
    pub arm: f64,
    pub iterations: usize,
}

/// One application of the coupled updates.
fn bellman_map(samples: &BellmanSamples, rho: f64, agent: f64, arm: f64) -> (f64, f64) {
    let n = samples.agent_gains.len() as f64;
    let (mut a_sum, mut b_sum) = (0.0, 0.0);
    for (&a, &b) in samples.agent_gains.iter().zip(&samples.arm_gains) {
        if a >= agent && b >= arm {
            a_sum += a;
            b_sum += b;
        } else {
            a_sum += agent;
            b_sum += arm;
        }
    }
    (rho * a_sum / n, rho * b_sum / n)
}

/// Iterates the reservation updates to a fixed point, stopping when both
/// values move by less than 1e-6.
pub fn bellman_iterate(samples: &BellmanSamples, rho: f64, initial: (f64, f64)) -> Result<BellmanSolution> {
    const CAP: usize = 100_000;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("discount must lie in [0, 1), got {rho}")));
    }
    if samples.agent_gains.is_empty() || samples.agent_gains.len() != samples.arm_gains.len() {
        return Err(Error::Domain("need equally many nonzero agent and arm samples".into()));
    }
    let (mut agent, mut arm) = initial;
    let mut change = f64::INFINITY;
    for it in 1..=CAP {
        let (a, b) = bellman_map(samples, rho, agent, arm);
        change = (a - agent).abs().max((b - arm).abs());
        agent = a;
        arm = b;
        if change < 1e-6 {
            return Ok(BellmanSolution { agent, arm, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: CAP, last_change: change, last_iterate: vec![agent, arm] })
}

/// Absolute residuals of the fixed-point equations at `(agent, arm)`.
pub fn bellman_residual(samples: &BellmanSamples, rho: f64, agent: f64, arm: f64) -> (f64, f64) {
    let (a, b) = bellman_map(samples, rho, agent, arm);
    ((a - agent).abs(), (b - arm).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discount_gives_zero_reservations() {
        let samples = BellmanSamples::uniform(100.0, 1000, 1);
        let sol = bellman_iterate(&samples, 0.0, (30.0, 70.0)).unwrap();
        assert_eq!((sol.agent, sol.arm), (0.0, 0.0));
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn mirrored_samples_give_equal_reservations() {
        let base = BellmanSamples::uniform(1.0, 10_000, 2).agent_gains;
        let mirrored: Vec<f64> = base.iter().rev().copied().collect();
        let samples = BellmanSamples { agent_gains: base, arm_gains: mirrored };
        let sol = bellman_iterate(&samples, 0.9, (0.0, 0.0)).unwrap();
        assert!((sol.agent - sol.arm).abs() < 1e-9);
        assert!(sol.agent > 0.0 && sol.agent < 1.0);
    }

    #[test]
    fn rejects_undiscounted_search() {
        let samples = BellmanSamples::uniform(1.0, 10, 3);
        assert!(bellman_iterate(&samples, 1.0, (0.0, 0.0)).is_err());
    }

    #[test]
    fn step_rules() {
        let zero = ReservationSchedule::new(vec![0.0; 3]).unwrap();
        assert!(patient_strategy_step(0.0, 0.0, &zero, 1, 0.0).unwrap());
        let high = ReservationSchedule::new(vec![101.0; 3]).unwrap();
        assert!(!patient_strategy_step(100.0, 100.0, &high, 2, 0.0).unwrap());
        assert!(!patient_strategy_step(50.0, 10.0, &zero, 1, 20.0).unwrap());
        assert!(patient_strategy_step(50.0, 10.0, &zero, 3, 0.0).is_ok());
        assert!(patient_strategy_step(50.0, 10.0, &zero, 4, 0.0).is_err());
    }

    #[test]
    fn schedule_shapes() {
        let n = 100;
        let convex = ReservationSchedule::convex(n, 50.0, 5.0);
        let concave = ReservationSchedule::concave(n, 50.0, 5.0);
        assert_eq!(convex.at(1).unwrap(), 50.0);
        assert_eq!(concave.at(1).unwrap(), 50.0);
        assert!((convex.at(n).unwrap() - concave.at(n).unwrap()).abs() < 1e-12);
        for k in 2..n {
            assert!(convex.at(k).unwrap() < concave.at(k).unwrap());
        }
    }
}
