use rand::{Rng, RngCore};

use crate::error::Result;
use crate::market::{AgentView, Strategy, StrategyDecision};

/// Top `min(remaining_quota, available)` arms by latent utility, ties by
/// lower id. `available` holds `(id, latent utility)`.
pub fn simple_cutoff_strategy(available: &[(usize, f64)], remaining_quota: usize) -> StrategyDecision {
    let mut ranked = available.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(remaining_quota);
    let mut decision = StrategyDecision::pulls(ranked.iter().map(|r| r.0).collect());
    if let Some(last) = ranked.last() {
        decision.cutoff = Some(last.1);
    }
    decision
}

fn utilities(view: &AgentView<'_>) -> Vec<(usize, f64)> {
    view.available.iter().map(|&j| (j, view.utility(j))).collect()
}

/// Pulls the most preferred arms up to the remaining quota.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleCutoff;

impl Strategy for SimpleCutoff {
    fn decide(&mut self, view: &AgentView<'_>, _rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        Ok(simple_cutoff_strategy(&utilities(view), view.remaining_quota()))
    }
}

/// Pulls the top `c` arms by latent utility, `c` uniform on `[1, 2r]` for
/// remaining quota `r`. Used to generate training histories.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomProposing;

impl Strategy for RandomProposing {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        let remaining = view.remaining_quota();
        if remaining == 0 {
            return Ok(StrategyDecision::default());
        }
        let count = rng.random_range(1..=2 * remaining);
        let mut decision = simple_cutoff_strategy(&utilities(view), count);
        decision.note("count", count);
        Ok(decision)
    }
}

/// Pulls fixed sets at the listed stages, skipping arms no longer available,
/// then behaves like `SimpleCutoff`.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    pub stages: Vec<Vec<usize>>,
}

impl Strategy for Scripted {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        match self.stages.get(view.stage - 1) {
            Some(script) => {
                let pulls: Vec<usize> = script
                    .iter()
                    .copied()
                    .filter(|j| view.available.binary_search(j).is_ok())
                    .collect();
                let mut decision = StrategyDecision::pulls(pulls);
                if decision.pulls.len() < script.len() {
                    decision.note("skipped", "scripted arms no longer available");
                }
                Ok(decision)
            }
            None => SimpleCutoff.decide(view, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_zero_and_short_lists() {
        assert!(simple_cutoff_strategy(&[(0, 1.0)], 0).pulls.is_empty());
        let d = simple_cutoff_strategy(&[(0, 1.0), (1, 2.0), (2, 0.5)], 5);
        assert_eq!(d.pulls, vec![1, 0, 2]);
    }

    #[test]
    fn first_agent_of_the_small_example() {
        // Latent utilities of P1 for A1..A4.
        let d = simple_cutoff_strategy(&[(0, 3.0), (1, 2.5), (2, 2.0), (3, 1.2)], 2);
        assert_eq!(d.pulls, vec![0, 1]);
    }

    #[test]
    fn ties_go_to_the_lower_id() {
        let d = simple_cutoff_strategy(&[(3, 1.0), (1, 1.0), (2, 1.0)], 2);
        assert_eq!(d.pulls, vec![1, 2]);
    }
}
