use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};

use crate::error::{Error, Result};

/// How an arm picks among the agents that pulled it.
pub trait ArmPreference: Sync {
    /// The arm's value for matching `agent`, or `None` if the agent is unacceptable.
    fn value(&self, arm: usize, agent: usize) -> Option<f64>;

    /// Chooses at most one puller. The default takes the highest-valued
    /// acceptable puller, breaking ties toward the lowest agent id.
    fn choose(
        &self,
        arm: usize,
        pullers: &[usize],
        _stage: usize,
        _rng: &mut dyn RngCore,
    ) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &agent in pullers {
            if let Some(v) = self.value(arm, agent) {
                let better = match best {
                    None => true,
                    Some((b, bv)) => v > bv || (v == bv && agent < b),
                };
                if better {
                    best = Some((agent, v));
                }
            }
        }
        best.map(|(a, _)| a)
    }

    /// Whether `arm` strictly prefers agent `a` to agent `b`.
    /// An acceptable agent beats an unacceptable one; equal values fall to the lower id.
    fn prefers(&self, arm: usize, a: usize, b: usize) -> bool {
        match (self.value(arm, a), self.value(arm, b)) {
            (Some(x), Some(y)) => x > y || (x == y && a < b),
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Arm-side values over agents, one row per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmUtilities {
    /// The state that generated these values.
    pub state: f64,
    values: Vec<Vec<Option<f64>>>,
}

impl ArmUtilities {
    pub fn from_values(state: f64, values: Vec<Vec<Option<f64>>>) -> Self {
        ArmUtilities { state, values }
    }

    /// Builds values from ranked lists, best first. Unlisted agents are unacceptable.
    pub fn from_rankings(rankings: &[Vec<usize>], agents: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rankings.len());
        for (arm, ranking) in rankings.iter().enumerate() {
            let mut row = vec![None; agents];
            for (pos, &agent) in ranking.iter().enumerate() {
                if agent >= agents {
                    return Err(Error::Preferences(format!(
                        "arm {arm} ranks unknown agent {agent}"
                    )));
                }
                if row[agent].is_some() {
                    return Err(Error::Preferences(format!(
                        "arm {arm} ranks agent {agent} twice"
                    )));
                }
                row[agent] = Some((ranking.len() - pos) as f64);
            }
            values.push(row);
        }
        Ok(ArmUtilities { state: 0.0, values })
    }

    /// Values `base_i + sensitivity_i * state + noise * g` with `g` standard
    /// Gumbel, drawn independently per (arm, agent) from `seed`.
    pub fn popularity(
        arms: usize,
        base: &[f64],
        sensitivity: &[f64],
        noise: f64,
        state: f64,
        seed: u64,
    ) -> Result<Self> {
        if base.len() != sensitivity.len() {
            return Err(Error::Config("base and sensitivity lengths differ".into()));
        }
        let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..arms)
            .map(|_| {
                base.iter()
                    .zip(sensitivity)
                    .map(|(b, s)| Some(b + s * state + noise * gumbel.sample(&mut rng)))
                    .collect()
            })
            .collect();
        Ok(ArmUtilities { state, values })
    }

    pub fn arm_count(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, arm: usize) -> &[Option<f64>] {
        &self.values[arm]
    }

    /// Marks `agent` unacceptable to `arm`.
    pub fn reject(&mut self, arm: usize, agent: usize) {
        self.values[arm][agent] = None;
    }

    /// Agents acceptable to `arm`, best first.
    pub fn ranking(&self, arm: usize) -> Vec<usize> {
        let row = &self.values[arm];
        let mut agents: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_some()).collect();
        agents.sort_by(|&a, &b| row[b].unwrap().total_cmp(&row[a].unwrap()).then(a.cmp(&b)));
        agents
    }
}

impl ArmPreference for ArmUtilities {
    fn value(&self, arm: usize, agent: usize) -> Option<f64> {
        self.values[arm].get(agent).copied().flatten()
    }
}
