//! Single-stage play against a multi-stage market whose first stage
//! replays it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stagematch::baselines::{RandomProposing, SimpleCutoff};
use stagematch::market::{run_with_strategies, AgentProfile, Arm, ArmUtilities, Strategy};
use stagematch::metrics::replay_comparison;
use stagematch::{Error, Result};

use super::replicate;
use super::tables::quota_market;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

const EXPERIMENT: &str = "multi_vs_single";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleStagePlay {
    SimpleCutoff,
    RandomProposing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiVsSingleParams {
    pub arms: usize,
    pub agents: usize,
    pub stages: usize,
    pub max_quota: usize,
    pub single_stage: SingleStagePlay,
}

impl Default for MultiVsSingleParams {
    fn default() -> Self {
        MultiVsSingleParams { arms: 10, agents: 3, stages: 3, max_quota: 3, single_stage: SingleStagePlay::RandomProposing }
    }
}

pub(super) fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params: MultiVsSingleParams = config.params()?;
    if params.agents == 0 || params.max_quota == 0 || params.stages < 2 || params.agents * params.max_quota > params.arms {
        return Err(Error::Config(
            "need agents, max_quota >= 1, stages >= 2 and agents * max_quota <= arms".into(),
        ));
    }
    let mut rows = table_rows(config.seed_for(0))?;
    rows.extend(replicate(config, |r, seed| random_instance(&params, r, seed))?);
    Ok(rows)
}

/// Straightforward play on the four-arm market with one and two stages.
fn table_rows(seed: u64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for stages in [1, 2] {
        let market = quota_market(stages)?;
        let mut strategies: Vec<Box<dyn Strategy>> =
            market.agents.iter().map(|_| Box::new(SimpleCutoff) as Box<dyn Strategy>).collect();
        let out = run_with_strategies(&market.arms, &market.agents, &market.preferences, stages, seed, &mut strategies)?;
        for (i, &payoff) in out.payoffs.iter().enumerate() {
            rows.push(
                ResultRow::new(EXPERIMENT, 0, i, "quota_market:straightforward", payoff)
                    .stages(stages)
                    .matched(out.matches_of(i).len()),
            );
        }
    }
    Ok(rows)
}

fn random_instance(params: &MultiVsSingleParams, replication: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms: Vec<Arm> = (0..params.arms)
        .map(|j| Arm::new(j, rng.random(), (0..params.agents).map(|_| rng.random()).collect()))
        .collect();
    let agents: Vec<AgentProfile> = (0..params.agents)
        .map(|i| AgentProfile::new(i, rng.random_range(1..=params.max_quota), 3.0, params.stages))
        .collect();
    let values = (0..params.arms)
        .map(|_| (0..params.agents).map(|_| Some(rng.random::<f64>())).collect())
        .collect();
    let preferences = ArmUtilities::from_values(0.0, values);
    let play = params.single_stage;
    let factory = move |_: usize| -> Box<dyn Strategy> {
        match play {
            SingleStagePlay::SimpleCutoff => Box::new(SimpleCutoff),
            SingleStagePlay::RandomProposing => Box::new(RandomProposing),
        }
    };
    let (single, multi) = replay_comparison(&arms, &agents, &preferences, params.stages, rng.random(), factory)?;
    let mut rows = Vec::with_capacity(2 * params.agents);
    for i in 0..params.agents {
        rows.push(
            ResultRow::new(EXPERIMENT, replication, i, "replay_single", single.payoffs[i])
                .stages(1)
                .matched(single.matches_of(i).len()),
        );
        rows.push(
            ResultRow::new(EXPERIMENT, replication, i, "replay_multi", multi.payoffs[i])
                .stages(params.stages)
                .matched(multi.matches_of(i).len()),
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentName;

    #[test]
    fn second_agent_gains_a_stage_on_the_small_market() {
        let rows = table_rows(0).unwrap();
        let p2: Vec<(Option<usize>, f64)> =
            rows.iter().filter(|r| r.agent_id == 1).map(|r| (r.stage_count, r.payoff)).collect();
        assert_eq!(p2, vec![(Some(1), 0.0), (Some(2), 1.5)]);
    }

    #[test]
    fn replay_never_loses() {
        let mut config = ExperimentConfig::named(ExperimentName::MultiVsSingle);
        config.replications = 30;
        let rows = run(&config).unwrap();
        for pair in rows.iter().filter(|r| r.method.starts_with("replay")).collect::<Vec<_>>().chunks(2) {
            assert!(pair[1].payoff >= pair[0].payoff);
        }
    }
}
