use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    realized_payoff, validate_market, AgentProfile, Arm, ArmPreference, MatchOutcome,
    MatchState, StrategyDecision,
};
use crate::error::{Error, Result};

/// What an agent sees when it decides.
pub struct AgentView<'a> {
    pub agent: usize,
    /// 1-based stage index.
    pub stage: usize,
    pub stages: usize,
    pub arms: &'a [Arm],
    /// Arms this agent may pull now, sorted by id.
    pub available: &'a [usize],
    pub prior_accepts: usize,
    pub profile: &'a AgentProfile,
}

impl AgentView<'_> {
    pub fn remaining_quota(&self) -> usize {
        self.profile.quota.saturating_sub(self.prior_accepts)
    }

    pub fn eta(&self) -> f64 {
        self.profile.eta(self.stage)
    }

    pub fn utility(&self, arm: usize) -> f64 {
        self.arms[arm].utility(self.agent)
    }
}

/// A per-agent pulling policy.
pub trait Strategy: Send {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> Result<StrategyDecision>;
}

impl<S: Strategy + ?Sized> Strategy for Box<S> {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        (**self).decide(view, rng)
    }
}

/// Runs the market with strategies built from each agent's `StrategySpec`.
pub fn run_multistage_match(
    arms: &[Arm],
    agents: &[AgentProfile],
    preferences: &dyn ArmPreference,
    stages: usize,
    seed: u64,
) -> Result<MatchOutcome> {
    let mut strategies = agents
        .iter()
        .map(|a| crate::strategies::build(&a.strategy))
        .collect::<Result<Vec<_>>>()?;
    run_with_strategies(arms, agents, preferences, stages, seed, &mut strategies)
}

/// Runs the market with caller-supplied strategies, one per agent.
pub fn run_with_strategies(
    arms: &[Arm],
    agents: &[AgentProfile],
    preferences: &dyn ArmPreference,
    stages: usize,
    seed: u64,
    strategies: &mut [Box<dyn Strategy + '_>],
) -> Result<MatchOutcome> {
    validate_market(arms, agents, stages)?;
    if strategies.len() != agents.len() {
        return Err(Error::Config(format!(
            "{} strategies for {} agents",
            strategies.len(),
            agents.len()
        )));
    }
    let m = agents.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MatchState {
        stage: 1,
        available_arms: (0..arms.len()).collect(),
        matched: BTreeMap::new(),
        accepted_counts: vec![0; m],
    };
    let mut pulled_before: Vec<Vec<bool>> = vec![vec![false; arms.len()]; m];
    let eligible: Vec<Vec<bool>> = agents
        .iter()
        .map(|a| match &a.eligible {
            None => vec![true; arms.len()],
            Some(list) => {
                let mut mask = vec![false; arms.len()];
                for &j in list {
                    mask[j] = true;
                }
                mask
            }
        })
        .collect();

    let mut pulls = vec![vec![Vec::new(); stages]; m];
    let mut accepts = vec![vec![Vec::new(); stages]; m];
    let mut decisions = vec![Vec::new(); m];
    let mut stages_run = 0;

    for stage in 1..=stages {
        if (0..m).all(|i| state.accepted_counts[i] >= agents[i].quota) {
            break;
        }
        state.stage = stage;
        stages_run = stage;
        let mut pullers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();

        for i in 0..m {
            let decision = if state.accepted_counts[i] >= agents[i].quota {
                let mut d = StrategyDecision::default();
                d.note("exited", "quota exhausted");
                d
            } else {
                let available: Vec<usize> = state
                    .available_arms
                    .iter()
                    .copied()
                    .filter(|&j| eligible[i][j] && !pulled_before[i][j])
                    .collect();
                let view = AgentView {
                    agent: i,
                    stage,
                    stages,
                    arms,
                    available: &available,
                    prior_accepts: state.accepted_counts[i],
                    profile: &agents[i],
                };
                let decision = strategies[i].decide(&view, &mut rng)?;
                check_pulls(&decision.pulls, &available, i, stage)?;
                decision
            };
            let mut set = decision.pulls.clone();
            set.sort_unstable();
            for &j in &set {
                pulled_before[i][j] = true;
                pullers.entry(j).or_default().push(i);
            }
            pulls[i][stage - 1] = set;
            decisions[i].push(decision);
        }

        for (&arm, agents_pulling) in &pullers {
            if let Some(winner) = preferences.choose(arm, agents_pulling, stage, &mut rng) {
                if !agents_pulling.contains(&winner) {
                    return Err(Error::Config(format!(
                        "preference model picked agent {winner} who did not pull arm {arm}"
                    )));
                }
                state.matched.insert(arm, winner);
                state.accepted_counts[winner] += 1;
                accepts[winner][stage - 1].push(arm);
            }
        }
        state
            .available_arms
            .retain(|j| !state.matched.contains_key(j));
    }

    let payoffs = (0..m)
        .map(|i| {
            let utilities: Vec<f64> = state
                .matched
                .iter()
                .filter(|(_, &a)| a == i)
                .map(|(&j, _)| arms[j].utility(i))
                .collect();
            realized_payoff(&utilities, agents[i].quota, agents[i].penalty)
        })
        .collect();

    Ok(MatchOutcome {
        stages_run,
        pulls,
        accepts,
        matched: state.matched,
        payoffs,
        decisions,
    })
}

fn check_pulls(pulls: &[usize], available: &[usize], agent: usize, stage: usize) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for &j in pulls {
        if available.binary_search(&j).is_err() {
            return Err(Error::ContractViolation {
                agent,
                stage,
                reason: format!("arm {j} is matched, ineligible or already pulled"),
            });
        }
        if !seen.insert(j) {
            return Err(Error::ContractViolation {
                agent,
                stage,
                reason: format!("arm {j} pulled twice"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{ArmUtilities, StrategySpec};

    struct Fixed(Vec<usize>);

    impl Strategy for Fixed {
        fn decide(&mut self, _: &AgentView<'_>, _: &mut dyn RngCore) -> Result<StrategyDecision> {
            Ok(StrategyDecision::pulls(self.0.clone()))
        }
    }

    fn two_arm_market() -> (Vec<Arm>, Vec<AgentProfile>, ArmUtilities) {
        let arms = vec![Arm::new(0, 1.0, vec![0.0]), Arm::new(1, 0.5, vec![0.0])];
        let agents = vec![AgentProfile::new(0, 1, 5.0, 2)];
        let prefs = ArmUtilities::from_rankings(&[vec![0], vec![0]], 1).unwrap();
        (arms, agents, prefs)
    }

    #[test]
    fn re_pulling_is_a_contract_violation() {
        let (arms, agents, prefs) = two_arm_market();
        let mut strategies: Vec<Box<dyn Strategy>> = vec![Box::new(Fixed(vec![5]))];
        let err = run_with_strategies(&arms, &agents, &prefs, 1, 0, &mut strategies).unwrap_err();
        assert!(matches!(err, Error::ContractViolation { .. }));
    }

    #[test]
    fn exhausted_agents_stop_pulling() {
        let (arms, agents, prefs) = two_arm_market();
        let out = run_multistage_match(&arms, &agents, &prefs, 2, 0).unwrap();
        assert_eq!(out.pairs(), vec![(0, 0)]);
        assert_eq!(out.stages_run, 1);
        assert!(out.pulls[0][1].is_empty());
    }

    #[test]
    fn rejected_arms_cannot_be_pulled_again() {
        let arms = vec![Arm::new(0, 1.0, vec![0.0]), Arm::new(1, 0.5, vec![0.0])];
        let agents = vec![AgentProfile::new(0, 1, 5.0, 2).with_strategy(StrategySpec::SimpleCutoff)];
        let prefs = ArmUtilities::from_rankings(&[vec![], vec![0]], 1).unwrap();
        let out = run_multistage_match(&arms, &agents, &prefs, 2, 0).unwrap();
        assert_eq!(out.pulls[0], vec![vec![0], vec![1]]);
        assert_eq!(out.pairs(), vec![(1, 0)]);
    }
}
