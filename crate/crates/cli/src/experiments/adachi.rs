//! Random-meeting search: each stage every unmatched agent meets one random
//! unmatched arm. Agent 0 follows a fixed reservation schedule, the others a
//! stationary reservation from the Bellman fixed point. An arm accepts an
//! agent worth at least its own common value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stagematch::baselines::{bellman_iterate, patient_strategy_step, BellmanSamples, ReservationSchedule};
use stagematch::{Error, Result};

use super::replicate;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdachiParams {
    /// Market sizes; agents and arms are equally many.
    pub arm_counts: Vec<usize>,
    pub stages: usize,
    /// What every arm gains from matching agent 0.
    pub focal_value: f64,
    pub base: f64,
    pub slope: f64,
    /// Discount of the other agents' stationary search.
    pub rho: f64,
    /// Values are uniform on `[0, scale]`.
    pub scale: f64,
    pub bellman_samples: usize,
}

impl Default for AdachiParams {
    fn default() -> Self {
        AdachiParams {
            arm_counts: (1..=10).map(|k| 100 * k).collect(),
            stages: 500,
            focal_value: 40.0,
            base: 50.0,
            slope: 5.0,
            rho: 0.9,
            scale: 60.0,
            bellman_samples: 20_000,
        }
    }
}

pub(super) fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let p: AdachiParams = config.params()?;
    if p.stages == 0 || p.arm_counts.iter().any(|&n| n < 2) || !(p.scale > 0.0) {
        return Err(Error::Config("need stages >= 1, arm counts >= 2 and a positive scale".into()));
    }
    let samples = BellmanSamples::uniform(p.scale, p.bellman_samples, config.shared_seed(0));
    let others = bellman_iterate(&samples, p.rho, (0.0, 0.0))?.agent;
    let schedules = [
        ("convex_schedule", ReservationSchedule::convex(p.stages, p.base, p.slope)),
        ("concave_schedule", ReservationSchedule::concave(p.stages, p.base, p.slope)),
    ];
    replicate(config, |r, seed| {
        let mut rows = Vec::new();
        for (size_index, &n) in p.arm_counts.iter().enumerate() {
            let market_seed = stagematch::stats::derive_seed(seed, size_index as u64, 0);
            for (method, schedule) in &schedules {
                let gain = search(&p, n, schedule, others, market_seed)?;
                let row = ResultRow::new("adachi_search", r, 0, method, gain.unwrap_or(0.0))
                    .students(n)
                    .stages(p.stages)
                    .matched(gain.is_some() as usize);
                rows.push(row);
            }
        }
        Ok(rows)
    })
}

/// Agent 0's gain, or `None` if it never matched.
fn search(p: &AdachiParams, n: usize, schedule: &ReservationSchedule, others: f64, seed: u64) -> Result<Option<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arm_value: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * p.scale).collect();
    let mut agent_value: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * p.scale).collect();
    agent_value[0] = p.focal_value;
    let flat = ReservationSchedule::new(vec![others; p.stages])?;

    let mut free_arms: Vec<usize> = (0..n).collect();
    let mut free_agents: Vec<usize> = (0..n).collect();
    for stage in 1..=p.stages {
        if free_arms.is_empty() || free_agents.is_empty() {
            break;
        }
        // Best willing agent per met arm this stage.
        let mut best: Vec<Option<usize>> = vec![None; n];
        for &i in &free_agents {
            let j = free_arms[rng.random_range(0..free_arms.len())];
            let plan = if i == 0 { schedule } else { &flat };
            if patient_strategy_step(arm_value[j], agent_value[i], plan, stage, arm_value[j])? {
                let better = best[j].is_none_or(|b| agent_value[i] > agent_value[b]);
                if better {
                    best[j] = Some(i);
                }
            }
        }
        if let Some(j) = free_arms.iter().copied().find(|&j| best[j] == Some(0)) {
            return Ok(Some(arm_value[j]));
        }
        free_arms.retain(|&j| best[j].is_none());
        let mut taken = vec![false; n];
        for &i in best.iter().flatten() {
            taken[i] = true;
        }
        free_agents.retain(|&i| !taken[i]);
    }
    Ok(None)
}
