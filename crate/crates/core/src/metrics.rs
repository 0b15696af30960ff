//! Fairness and welfare measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{deferred_acceptance, DaInstance, Scripted, SimpleCutoff};
use crate::error::{Error, Result};
use crate::learning::FittedAcceptanceModel;
use crate::market::{
    realized_payoff, run_with_strategies, AgentProfile, Arm, ArmPreference, ArmUtilities, MatchOutcome, Strategy,
};
use crate::variational::{uncertainty_measure, AcceptanceSurface};

/// `δ(v) / π(s, v)` for a known surface.
pub fn uncertainty_level(surface: &dyn AcceptanceSurface, grid: &[f64], state: f64, score: f64) -> Result<f64> {
    let pi = surface.pi(state, score);
    if !(pi > 0.0) {
        return Err(Error::Domain(format!("uncertainty level undefined where pi = {pi}")));
    }
    Ok(uncertainty_measure(surface, grid, score)? / pi)
}

/// `δ̂(v) / π̂(s, v)` for a fitted model.
pub fn model_uncertainty_level(model: &FittedAcceptanceModel, state: f64, score: f64) -> f64 {
    model.delta_hat(score) / model.predict_pi(state, score)
}

/// Which arms had justified envy and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvyReport {
    /// Per arm: envy at some stage.
    pub flags: Vec<bool>,
    /// Arms with envy at each stage, sorted.
    pub by_stage: Vec<Vec<usize>>,
    /// Number of arms flagged.
    pub level: usize,
    /// Per-arm uncertainty levels, when supplied.
    pub uncertainty: Option<Vec<f64>>,
}

impl EnvyReport {
    pub fn with_uncertainty(mut self, levels: Vec<f64>) -> Self {
        self.uncertainty = Some(levels);
        self
    }
}

/// Ex-ante justified envy from pull sets.
///
/// Arm `j` has justified envy at stage `k` when some agent `i'` that could
/// have pulled `j` instead pulled an arm it ranks below `j`, and `j` would
/// rather have `i'` than some agent that did pull it. When nobody pulled `j`,
/// being acceptable to `j` is enough.
pub fn justified_envy_report(
    outcome: &MatchOutcome,
    arms: &[Arm],
    agents: &[AgentProfile],
    preferences: &dyn ArmPreference,
) -> Result<EnvyReport> {
    let m = agents.len();
    if outcome.pulls.len() != m {
        return Err(Error::Domain(format!("outcome has {} agents, expected {m}", outcome.pulls.len())));
    }
    let n = arms.len();
    let mut matched_at: Vec<Option<usize>> = vec![None; n];
    for i in 0..m {
        for (k, accepted) in outcome.accepts[i].iter().enumerate() {
            for &j in accepted {
                matched_at[j] = Some(k);
            }
        }
    }
    let ranks_below = |agent: usize, lower: usize, upper: usize| {
        let (a, b) = (arms[lower].utility(agent), arms[upper].utility(agent));
        a < b || (a == b && lower > upper)
    };
    let mut flags = vec![false; n];
    let mut by_stage = Vec::with_capacity(outcome.stages_run);
    for k in 0..outcome.stages_run {
        let mut pullers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..m {
            for &j in &outcome.pulls[i][k] {
                pullers[j].push(i);
            }
        }
        let mut flagged = Vec::new();
        for j in 0..n {
            if matched_at[j].is_some_and(|at| at < k) {
                continue;
            }
            let envious = (0..m).any(|other| {
                let pulls = &outcome.pulls[other][k];
                if pulls.is_empty() || pulls.contains(&j) {
                    return false;
                }
                let could_pull = agents[other].eligible.as_ref().is_none_or(|e| e.contains(&j))
                    && (0..k).all(|l| !outcome.pulls[other][l].contains(&j));
                if !could_pull || !pulls.iter().any(|&low| ranks_below(other, low, j)) {
                    return false;
                }
                if pullers[j].is_empty() {
                    preferences.value(j, other).is_some()
                } else {
                    pullers[j].iter().any(|&p| preferences.prefers(j, other, p))
                }
            });
            if envious {
                flags[j] = true;
                flagged.push(j);
            }
        }
        by_stage.push(flagged);
    }
    let level = flags.iter().filter(|&&f| f).count();
    Ok(EnvyReport { flags, by_stage, level, uncertainty: None })
}

/// Width of the justified-envy band, `b̂ / (1 − η·u) − b′`, for uncertainty
/// level `u`. Requires `η·u < 1`.
pub fn envy_band_width(b_hat: f64, b_prime: f64, eta: f64, level: f64) -> Result<f64> {
    let shrink = 1.0 - eta * level;
    if !(shrink > 0.0) {
        return Err(Error::Domain(format!("eta * uncertainty level = {} must be below 1", eta * level)));
    }
    Ok(b_hat / shrink - b_prime)
}

/// Arms whose latent utility falls inside their envy band
/// `(b′, b̂ / (1 − η·u))`. Arms are `(latent utility, uncertainty level)`.
pub fn envy_band_count(arms: &[(f64, f64)], b_hat: f64, b_prime: f64, eta: f64) -> Result<usize> {
    let mut count = 0;
    for &(w, level) in arms {
        let upper = b_prime + envy_band_width(b_hat, b_prime, eta, level)?;
        if w > b_prime && w < upper {
            count += 1;
        }
    }
    Ok(count)
}

/// Centralized or decentralized allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Every agent pulls its top arms up to its remaining quota each stage.
    Straightforward,
    /// Arm-proposing deferred acceptance.
    DeferredAcceptance,
}

/// One agent's payoff under one mechanism and stage count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareRow {
    pub mechanism: Mechanism,
    pub stages: usize,
    pub replication: usize,
    pub agent: usize,
    pub payoff: f64,
    pub matched: usize,
}

/// Matched pairs and payoffs from deferred acceptance on a market.
pub fn da_outcome(arms: &[Arm], agents: &[AgentProfile], prefs: &ArmUtilities) -> Result<(BTreeMap<usize, usize>, Vec<f64>)> {
    let quotas: Vec<usize> = agents.iter().map(|a| a.quota).collect();
    let inst = DaInstance::from_market(arms, &quotas, prefs)?;
    let matching = deferred_acceptance(&inst)?;
    let payoffs = agents
        .iter()
        .map(|a| {
            let utilities: Vec<f64> = matching.iter().filter(|(_, &i)| i == a.id).map(|(&j, _)| arms[j].utility(a.id)).collect();
            realized_payoff(&utilities, a.quota, a.penalty)
        })
        .collect();
    Ok((matching, payoffs))
}

/// Per-agent payoffs for each mechanism and stage count over replications.
/// Replication `r` runs with seed `seed_of(r)`. Deferred acceptance ignores
/// the stage count and is reported once per replication with `stages = 0`.
pub fn welfare_compare(
    arms: &[Arm],
    agents: &[AgentProfile],
    prefs: &ArmUtilities,
    mechanisms: &[Mechanism],
    stage_variants: &[usize],
    reps: usize,
    seed_of: impl Fn(usize) -> u64,
) -> Result<Vec<WelfareRow>> {
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let mut rows = Vec::new();
    for r in 0..reps {
        for &mechanism in mechanisms {
            match mechanism {
                Mechanism::DeferredAcceptance => {
                    let (matching, payoffs) = da_outcome(arms, agents, prefs)?;
                    for (i, &payoff) in payoffs.iter().enumerate() {
                        let matched = matching.values().filter(|&&a| a == i).count();
                        rows.push(WelfareRow { mechanism, stages: 0, replication: r, agent: i, payoff, matched });
                    }
                }
                Mechanism::Straightforward => {
                    for &stages in stage_variants {
                        let mut strategies: Vec<Box<dyn Strategy>> =
                            agents.iter().map(|_| Box::new(SimpleCutoff) as Box<dyn Strategy>).collect();
                        let outcome = run_with_strategies(arms, agents, prefs, stages, seed_of(r), &mut strategies)?;
                        for (i, &payoff) in outcome.payoffs.iter().enumerate() {
                            let matched = outcome.matches_of(i).len();
                            rows.push(WelfareRow { mechanism, stages, replication: r, agent: i, payoff, matched });
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Single-stage payoffs next to multi-stage payoffs where every agent's
/// first stage replays its single-stage pulls and later stages use the
/// simple cutoff.
pub fn replay_comparison(
    arms: &[Arm],
    agents: &[AgentProfile],
    prefs: &dyn ArmPreference,
    stages: usize,
    seed: u64,
    single_stage: impl Fn(usize) -> Box<dyn Strategy>,
) -> Result<(MatchOutcome, MatchOutcome)> {
    let mut first: Vec<Box<dyn Strategy>> = (0..agents.len()).map(&single_stage).collect();
    let single = run_with_strategies(arms, agents, prefs, 1, seed, &mut first)?;
    let mut replay: Vec<Box<dyn Strategy>> = (0..agents.len())
        .map(|i| Box::new(Scripted { stages: vec![single.pulls[i][0].clone()] }) as Box<dyn Strategy>)
        .collect();
    let multi = run_with_strategies(arms, agents, prefs, stages, seed, &mut replay)?;
    Ok((single, multi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::state_grid;

    #[test]
    fn uncertainty_level_examples() {
        let lin = |s: f64, _: f64| s;
        assert!((uncertainty_level(&lin, &[0.4, 0.6], 0.6, 1.0).unwrap() - 0.1 / 0.6).abs() < 1e-12);
        let flat = |_: f64, _: f64| 0.3;
        assert_eq!(uncertainty_level(&flat, &state_grid(11), 0.5, 1.0).unwrap(), 0.0);
        let zero = |_: f64, _: f64| 0.0;
        assert!(uncertainty_level(&zero, &state_grid(11), 0.5, 1.0).is_err());
    }

    #[test]
    fn band_width_grows_with_uncertainty() {
        let mut last = f64::NEG_INFINITY;
        for i in 0..20 {
            let w = envy_band_width(2.0, 2.0, 0.3, i as f64 * 0.1).unwrap();
            assert!(w > last);
            last = w;
        }
        assert_eq!(envy_band_width(2.0, 2.0, 0.0, 0.7).unwrap(), 0.0);
        assert!(envy_band_width(2.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn band_count_vanishes_without_regularization() {
        let arms = [(2.1, 0.5), (2.5, 0.2), (1.0, 0.9)];
        assert_eq!(envy_band_count(&arms, 2.0, 2.0, 0.0).unwrap(), 0);
        assert_eq!(envy_band_count(&[(2.1, 0.0), (2.5, 0.0)], 2.0, 2.0, 0.4).unwrap(), 0);
        assert_eq!(envy_band_count(&arms, 2.0, 2.0, 0.4).unwrap(), 1);
    }
}
