//! Market primitives and the multi-stage decentralized engine.
//!
//! Agents pull arms, arms make irreversible accept/reject decisions, matched
//! arms leave the market and agent quotas deplete. Over-enrollment is
//! allowed and charged through the quota penalty.

mod engine;
mod instance;
mod preference;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{run_multistage_match, run_with_strategies, AgentView, Strategy};
pub use instance::{Instance, PreferenceSpec};
pub use preference::{ArmPreference, ArmUtilities};

/// An arm with its systematic score and one fit per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub id: usize,
    pub score: f64,
    pub fits: Vec<f64>,
}

impl Arm {
    pub fn new(id: usize, score: f64, fits: Vec<f64>) -> Self {
        Arm { id, score, fits }
    }

    /// Latent utility of this arm for `agent`.
    pub fn utility(&self, agent: usize) -> f64 {
        self.score + self.fits[agent]
    }
}

/// How an agent chooses its pull sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    /// Pull the top remaining-quota arms by latent utility.
    SimpleCutoff,
    /// Pull fixed sets at the listed stages, then fall back to the simple cutoff.
    Scripted { stages: Vec<Vec<usize>> },
    /// Pull the top `c` arms by latent utility with `c` uniform on `[1, 2q]`.
    RandomProposing,
    /// Algorithm 1 with models fit from a history file.
    LubCdm {
        history: String,
        #[serde(default)]
        calibration: CalibrationMode,
    },
    /// Algorithm 1 with the regularization forced to zero.
    Cdm {
        history: String,
        #[serde(default)]
        calibration: CalibrationMode,
    },
}

/// Criterion used to calibrate the state parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    #[default]
    Average,
    Minimax,
}

/// One agent's market parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub id: usize,
    pub quota: usize,
    pub penalty: f64,
    /// Per-stage regularization; the last entry must be zero.
    pub eta_schedule: Vec<f64>,
    pub strategy: StrategySpec,
    /// Arms this agent can see. `None` means every arm.
    #[serde(default)]
    pub eligible: Option<Vec<usize>>,
}

impl AgentProfile {
    pub fn new(id: usize, quota: usize, penalty: f64, stages: usize) -> Self {
        AgentProfile {
            id,
            quota,
            penalty,
            eta_schedule: vec![0.0; stages],
            strategy: StrategySpec::SimpleCutoff,
            eligible: None,
        }
    }

    pub fn with_strategy(mut self, strategy: StrategySpec) -> Self {
        self.strategy = strategy;
        self
    }

    /// Regularization at a 1-based stage; stages past the schedule use zero.
    pub fn eta(&self, stage: usize) -> f64 {
        self.eta_schedule.get(stage - 1).copied().unwrap_or(0.0)
    }
}

/// Engine state at the start of a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchState {
    pub stage: usize,
    pub available_arms: Vec<usize>,
    pub matched: BTreeMap<usize, usize>,
    pub accepted_counts: Vec<usize>,
}

/// An agent's pull set for one stage plus what led to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyDecision {
    pub pulls: Vec<usize>,
    pub calibrated_state: Option<f64>,
    pub cutoff: Option<f64>,
    pub diagnostics: BTreeMap<String, String>,
}

impl StrategyDecision {
    pub fn pulls(pulls: Vec<usize>) -> Self {
        StrategyDecision {
            pulls,
            ..Default::default()
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.diagnostics.insert(key.to_string(), value.to_string());
    }
}

/// Everything that happened in one market run.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// Number of stages actually simulated.
    pub stages_run: usize,
    /// `pulls[i][k]` is agent i's pull set at stage k+1, sorted by arm id.
    pub pulls: Vec<Vec<Vec<usize>>>,
    /// `accepts[i][k]` is the subset of `pulls[i][k]` that accepted.
    pub accepts: Vec<Vec<Vec<usize>>>,
    /// Final matching, arm id to agent id.
    pub matched: BTreeMap<usize, usize>,
    pub payoffs: Vec<f64>,
    pub decisions: Vec<Vec<StrategyDecision>>,
}

impl MatchOutcome {
    /// Arms matched to `agent`, sorted by id.
    pub fn matches_of(&self, agent: usize) -> Vec<usize> {
        self.matched
            .iter()
            .filter(|(_, &a)| a == agent)
            .map(|(&arm, _)| arm)
            .collect()
    }

    /// Matching as sorted (arm, agent) pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matched.iter().map(|(&a, &p)| (a, p)).collect()
    }
}

/// Latent utility `v + e` of an arm to an agent.
pub fn latent_utility(score: f64, fit: f64) -> Result<f64> {
    if !(score >= 0.0) || !(fit >= 0.0) {
        return Err(Error::Domain(format!(
            "score and fit must be nonnegative, got v={score}, e={fit}"
        )));
    }
    Ok(score + fit)
}

/// Expected payoff of pulling arms given as `(latent utility, acceptance probability)`.
pub fn expected_payoff(
    pulled: &[(f64, f64)],
    prior_accepts: usize,
    quota: usize,
    penalty: f64,
) -> Result<f64> {
    let mut utility = 0.0;
    let mut expected_accepts = 0.0;
    for &(w, pi) in pulled {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::Domain(format!("acceptance probability {pi} outside [0,1]")));
        }
        utility += w * pi;
        expected_accepts += pi;
    }
    let excess = expected_accepts + prior_accepts as f64 - quota as f64;
    Ok(utility - penalty * excess.max(0.0))
}

/// Realized payoff from matched latent utilities.
pub fn realized_payoff(matched_utilities: &[f64], quota: usize, penalty: f64) -> f64 {
    let total: f64 = matched_utilities.iter().sum();
    let excess = matched_utilities.len().saturating_sub(quota);
    total - penalty * excess as f64
}

/// Arm ids sorted by latent utility for `agent`, best first, ties by lower id.
pub fn rank_by_utility(arms: &[Arm], ids: &[usize], agent: usize) -> Vec<usize> {
    let mut ranked = ids.to_vec();
    ranked.sort_by(|&a, &b| {
        arms[b]
            .utility(agent)
            .total_cmp(&arms[a].utility(agent))
            .then(a.cmp(&b))
    });
    ranked
}

/// Checks the invariants shared by every market: ids in order, fits per
/// agent, nonnegative attributes, a penalty above every latent utility and a
/// zero last-stage regularizer.
pub fn validate_market(arms: &[Arm], agents: &[AgentProfile], stages: usize) -> Result<()> {
    if stages == 0 {
        return Err(Error::Config("a market needs at least one stage".into()));
    }
    for (pos, arm) in arms.iter().enumerate() {
        if arm.id != pos {
            return Err(Error::Config(format!("arm at position {pos} has id {}", arm.id)));
        }
        if arm.fits.len() != agents.len() {
            return Err(Error::Config(format!(
                "arm {} has {} fits for {} agents",
                arm.id,
                arm.fits.len(),
                agents.len()
            )));
        }
        for &fit in &arm.fits {
            latent_utility(arm.score, fit)?;
        }
    }
    for (pos, agent) in agents.iter().enumerate() {
        if agent.id != pos {
            return Err(Error::Config(format!("agent at position {pos} has id {}", agent.id)));
        }
        if agent.quota == 0 {
            return Err(Error::Config(format!("agent {} has a zero quota", agent.id)));
        }
        let best = arms.iter().map(|a| a.utility(pos)).fold(0.0, f64::max);
        if !(agent.penalty > best) {
            return Err(Error::Config(format!(
                "agent {} penalty {} does not exceed the best latent utility {best}",
                agent.id, agent.penalty
            )));
        }
        if agent.eta_schedule.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Config(format!("agent {} has a negative eta", agent.id)));
        }
        if agent.eta(stages) != 0.0 {
            return Err(Error::Config(format!(
                "agent {} must use eta = 0 at the last stage",
                agent.id
            )));
        }
        if let Some(eligible) = &agent.eligible {
            if let Some(&bad) = eligible.iter().find(|&&j| j >= arms.len()) {
                return Err(Error::Config(format!(
                    "agent {} lists unknown arm {bad} as eligible",
                    agent.id
                )));
            }
        }
    }
    Ok(())
}
