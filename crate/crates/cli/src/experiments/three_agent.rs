//! Two equally likely states, three agents. Agent 0 switches from the
//! calibrated strategy without regularization to the learned strategy with
//! stage-1 regularization η; agent 1 keeps the former, agent 2 pulls its
//! top arms by score.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use rand::RngCore;
use stagematch::baselines::simple_cutoff_strategy;
use stagematch::learning::{history_from_outcome, HistoryRecord, LearnerConfig};
use stagematch::lub_cdm::{fit_stage_model, LubCdmConfig, LubCdmStrategy, StageModel, StateModel};
use stagematch::market::{
    run_with_strategies, AgentProfile, AgentView, Arm, ArmUtilities, CalibrationMode, Strategy, StrategyDecision,
};
use stagematch::stats::derive_seed;
use stagematch::{Error, Result};

use super::replicate;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

const EXPERIMENT: &str = "three_agent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreeAgentParams {
    /// Share of arms preferring agent 0 in each of the two states.
    pub states: [f64; 2],
    pub arms: usize,
    pub quota: usize,
    /// What an arm gets from its favourite of agents 0/1, the other one, and agent 2.
    pub utilities: [f64; 3],
    /// Chance that agent 0 (or 1) finds an arm unacceptable.
    pub p_star: f64,
    /// Scores run over `lo + (hi − lo) i / points` for `i = 1..=points`,
    /// assigned to arms cyclically.
    pub score_range: [f64; 2],
    pub score_points: usize,
    pub penalty: f64,
    pub etas: Vec<f64>,
    pub training_periods: usize,
    /// In training, agents 0 and 1 pull their top `c` arms with `c` uniform
    /// between these multiples of the remaining quota.
    pub training_pulls: [usize; 2],
    pub calibration: CalibrationMode,
    pub learner: LearnerConfig,
    /// Agent 2's stage-1 pull count. `None` derives it from the parameters:
    /// the arms agents 0 and 1 contest plus the band below them that
    /// accepts agent 2.
    pub third_agent_pulls: Option<usize>,
}

impl Default for ThreeAgentParams {
    fn default() -> Self {
        ThreeAgentParams {
            states: [0.6, 0.4],
            arms: 100,
            quota: 10,
            utilities: [1.0, 0.9, 0.8],
            p_star: 0.3,
            score_range: [1.0, 3.0],
            score_points: 100,
            penalty: 5.0,
            etas: vec![0.05, 0.1, 0.15, 0.2],
            training_periods: 200,
            training_pulls: [1, 4],
            calibration: CalibrationMode::Average,
            learner: LearnerConfig { score_bandwidth_scales: vec![0.25, 0.5, 1.0], ..LearnerConfig::default() },
            third_agent_pulls: None,
        }
    }
}

impl ThreeAgentParams {
    fn validate(&self) -> Result<()> {
        let [u1, u2, u3] = self.utilities;
        if !self.states.iter().all(|s| (0.0..=1.0).contains(s))
            || !(0.0..1.0).contains(&self.p_star)
            || self.arms < 3 * self.quota
            || self.quota == 0
            || !(u1 > u2 && u3 < u1)
            || self.training_periods == 0
            || self.score_points == 0
            || !(1..=self.training_pulls[1]).contains(&self.training_pulls[0])
            || self.etas.iter().any(|&e| !(e >= 0.0))
        {
            return Err(Error::Config("three_agent parameters out of range".into()));
        }
        Ok(())
    }
}

impl ThreeAgentParams {
    /// Arms with score at or above the contested cutoff number
    /// `q / (s_a (1 − p*))`; a further `q (1 − p*² / (s_a (1 − p*)))` below
    /// it accept agent 2, which pulls both groups at stage 1.
    fn third_pulls(&self) -> usize {
        self.third_agent_pulls.unwrap_or_else(|| {
            let s_a = self.states[0].max(self.states[1]);
            let accept = s_a * (1.0 - self.p_star);
            let q = self.quota as f64;
            let contested = (q / accept).round();
            let band = (q * (1.0 - self.p_star * self.p_star / accept)).round();
            ((contested + band) as usize).min(self.arms)
        })
    }
}

/// One market draw: arm scores, which arms favour agent 0, and which arms
/// find agent 0 or 1 unacceptable. Agents only learn the latter by pulling.
fn market(p: &ThreeAgentParams, state: f64, eta: f64, seed: u64) -> (Vec<Arm>, Vec<AgentProfile>, ArmUtilities) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.arms;
    let [lo, hi] = p.score_range;
    let points = p.score_points;
    let arms: Vec<Arm> = (0..n)
        .map(|j| Arm::new(j, lo + (hi - lo) * (j % points + 1) as f64 / points as f64, vec![0.0; 3]))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut favours_first = vec![false; n];
    for &j in &order[..(state * n as f64).round() as usize] {
        favours_first[j] = true;
    }
    let [u1, u2, u3] = p.utilities;
    let values = (0..n)
        .map(|j| {
            let (a, b) = if favours_first[j] { (u1, u2) } else { (u2, u1) };
            let a = (rng.random::<f64>() >= p.p_star).then_some(a);
            let b = (rng.random::<f64>() >= p.p_star).then_some(b);
            vec![a, b, Some(u3)]
        })
        .collect();
    let agents = (0..3)
        .map(|i| {
            let mut agent = AgentProfile::new(i, p.quota, p.penalty, 2);
            if i == 0 {
                agent.eta_schedule = vec![eta, 0.0];
            }
            agent
        })
        .collect();
    (arms, agents, ArmUtilities::from_values(state, values))
}

/// Straightforward play with a random pull count, so training covers arms
/// on both sides of the test-time cutoff.
struct TopCount([usize; 2]);

impl Strategy for TopCount {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> stagematch::Result<StrategyDecision> {
        let r = view.remaining_quota();
        if r == 0 {
            return Ok(StrategyDecision::default());
        }
        let count = rng.random_range(self.0[0] * r..=self.0[1] * r);
        let pairs: Vec<(usize, f64)> = view.available.iter().map(|&j| (j, view.utility(j))).collect();
        Ok(simple_cutoff_strategy(&pairs, count))
    }
}

/// Pulls its top `first` arms at stage 1, then its top arms up to the
/// remaining quota.
struct ScoreCutoff {
    first: usize,
}

impl Strategy for ScoreCutoff {
    fn decide(&mut self, view: &AgentView<'_>, _rng: &mut dyn RngCore) -> stagematch::Result<StrategyDecision> {
        let count = if view.stage == 1 { self.first } else { view.remaining_quota() };
        let pairs: Vec<(usize, f64)> = view.available.iter().map(|&j| (j, view.utility(j))).collect();
        Ok(simple_cutoff_strategy(&pairs, count))
    }
}

/// Training histories with the states alternating between periods.
/// `learner` is agent 0's strategy; agent 1 explores when `opponent` is
/// `None` and otherwise plays the calibrated strategy on those models.
/// Returns the histories of agents 0 and 1; agent 1's state is `1 − s`.
fn training(
    p: &ThreeAgentParams,
    seed: u64,
    opponent: Option<(&Models, &LubCdmConfig)>,
) -> Result<[Vec<HistoryRecord>; 2]> {
    let mut histories = [Vec::new(), Vec::new()];
    for t in 0..p.training_periods {
        let state = p.states[t % 2];
        let period_seed = derive_seed(seed, t as u64, 0);
        let (arms, agents, prefs) = market(p, state, 0.0, period_seed);
        let second: Box<dyn Strategy> = match opponent {
            Some((models, config)) => Box::new(LubCdmStrategy::with_models(models.clone(), config.clone())),
            None => Box::new(TopCount(p.training_pulls)),
        };
        let mut strategies: Vec<Box<dyn Strategy>> =
            vec![Box::new(TopCount(p.training_pulls)), second, Box::new(ScoreCutoff { first: p.third_pulls() })];
        let out = run_with_strategies(&arms, &agents, &prefs, 2, period_seed, &mut strategies)?;
        histories[0].extend(history_from_outcome(&out, &arms, 0, t as u64, state));
        histories[1].extend(history_from_outcome(&out, &arms, 1, t as u64, 1.0 - state));
    }
    Ok(histories)
}

type Models = Vec<Option<Arc<StageModel>>>;

fn fit(history: &[HistoryRecord], config: &LubCdmConfig) -> Result<Models> {
    (1..=2).map(|k| Ok(fit_stage_model(history, k, config)?.map(Arc::new))).collect()
}

pub(super) fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let p: ThreeAgentParams = config.params()?;
    p.validate()?;
    let learner = LubCdmConfig {
        learner: p.learner.clone(),
        state_model: StateModel::Empirical,
        calibration: p.calibration,
        ..LubCdmConfig::default()
    };
    let cdm = LubCdmConfig { zero_eta: true, ..learner.clone() };

    replicate(config, |r, seed| {
        // Each replication learns from its own history. Agent 1 learns from
        // exploratory play; agent 0 then learns in the market it will face,
        // with agent 1 on the calibrated strategy.
        let [_, h1] = training(&p, derive_seed(seed, 0, 1), None)?;
        let m1 = fit(&h1, &learner)?;
        let [h0, _] = training(&p, derive_seed(seed, 0, 2), Some((&m1, &cdm)))?;
        let m0 = fit(&h0, &learner)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = p.states[rng.random_range(0..2)];
        let market_seed: u64 = rng.random();
        let mut rows = Vec::new();
        let variants = std::iter::once(("cdm", 0.0)).chain(p.etas.iter().map(|&e| ("lub_cdm", e)));
        for (method, eta) in variants {
            let (arms, agents, prefs) = market(&p, state, eta, market_seed);
            let first = if method == "cdm" { &cdm } else { &learner };
            let mut strategies: Vec<Box<dyn Strategy>> = vec![
                Box::new(LubCdmStrategy::with_models(m0.clone(), first.clone())),
                Box::new(LubCdmStrategy::with_models(m1.clone(), cdm.clone())),
                Box::new(ScoreCutoff { first: p.third_pulls() }),
            ];
            let out = run_with_strategies(&arms, &agents, &prefs, 2, market_seed, &mut strategies)?;
            for i in 0..2 {
                rows.push(
                    ResultRow::new(EXPERIMENT, r, i, method, out.payoffs[i])
                        .stages(2)
                        .matched(out.matches_of(i).len())
                        .eta(eta),
                );
            }
        }
        Ok(rows)
    })
}

/// Per-replication relative payoff change of `agent` from `cdm` to
/// `lub_cdm` at `eta`, `(lub − cdm) / |cdm|`. Replications where the
/// baseline payoff is zero are skipped.
pub fn relative_changes(rows: &[ResultRow], agent: usize, eta: f64) -> Vec<f64> {
    let find = |r: usize, method: &str, e: f64| {
        rows.iter()
            .find(|x| x.replication == r && x.agent_id == agent && x.method == method && x.eta == Some(e))
            .map(|x| x.payoff)
    };
    let reps: std::collections::BTreeSet<usize> = rows.iter().map(|x| x.replication).collect();
    reps.into_iter()
        .filter_map(|r| {
            let base = find(r, "cdm", 0.0)?;
            let lub = find(r, "lub_cdm", eta)?;
            (base != 0.0).then(|| (lub - base) / base.abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_agent_covers_the_contested_arms_and_the_band_below() {
        // 10 / 0.42 = 23.8 contested, 10 (1 − 0.09 / 0.42) = 7.9 below.
        assert_eq!(ThreeAgentParams::default().third_pulls(), 32);
    }

    #[test]
    fn market_draw_matches_the_parameters() {
        let p = ThreeAgentParams::default();
        let (arms, agents, prefs) = market(&p, 0.6, 0.1, 3);
        assert_eq!(arms.len(), 100);
        assert!((arms[0].score - 1.02).abs() < 1e-12 && arms[99].score == 3.0);
        assert_eq!(agents[0].eta_schedule, vec![0.1, 0.0]);
        let fans = (0..100).filter(|&j| prefs.row(j)[0] == Some(1.0)).count();
        let rejecting = (0..100).filter(|&j| prefs.row(j)[0].is_none()).count();
        assert!(fans <= 60 && (10..=50).contains(&rejecting));
        assert!((0..100).all(|j| prefs.row(j)[2] == Some(0.8)));
    }

    #[test]
    fn zero_regularization_changes_nothing() {
        let mut config = ExperimentConfig::named(crate::config::ExperimentName::ThreeAgent);
        config.replications = 4;
        config.params.insert("etas".into(), toml::Value::Array(vec![toml::Value::Float(0.0)]));
        config.params.insert("training_periods".into(), toml::Value::Integer(10));
        let rows = run(&config).unwrap();
        for agent in 0..2 {
            assert!(relative_changes(&rows, agent, 0.0).iter().all(|&x| x == 0.0));
        }
    }
}
