//! Deferred acceptance against two-stage straightforward play.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stagematch::baselines::SimpleCutoff;
use stagematch::market::{run_with_strategies, Strategy};
use stagematch::metrics::da_outcome;
use stagematch::{Error, Result};

use super::tables::{quota_market, unit_market, SmallMarket};
use super::ExperimentOutput;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaComparisonParams {
    /// Built-in instances: `quota_market`, `unit_market`.
    pub instances: Vec<String>,
    pub stages: usize,
}

impl Default for DaComparisonParams {
    fn default() -> Self {
        DaComparisonParams { instances: vec!["quota_market".into(), "unit_market".into()], stages: 2 }
    }
}

/// One matched pair, for the matchings table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingRow {
    pub instance: String,
    pub method: String,
    pub arm: usize,
    pub agent: usize,
}

pub(super) fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: DaComparisonParams = config.params()?;
    let mut out = ExperimentOutput::default();
    for name in &params.instances {
        let market = match name.as_str() {
            "quota_market" => quota_market(params.stages)?,
            "unit_market" => unit_market(params.stages)?,
            other => return Err(Error::Config(format!("unknown instance `{other}`; use quota_market or unit_market"))),
        };
        compare(&market, params.stages, config.seed_for(0), &mut out)?;
    }
    Ok(out)
}

fn compare(market: &SmallMarket, stages: usize, seed: u64, out: &mut ExperimentOutput) -> Result<()> {
    let experiment = "da_comparison";
    let (da, da_payoffs) = da_outcome(&market.arms, &market.agents, &market.preferences)?;
    let mut strategies: Vec<Box<dyn Strategy>> =
        market.agents.iter().map(|_| Box::new(SimpleCutoff) as Box<dyn Strategy>).collect();
    let decentralized =
        run_with_strategies(&market.arms, &market.agents, &market.preferences, stages, seed, &mut strategies)?;

    let da_method = format!("{}:deferred_acceptance", market.name);
    let dm_method = format!("{}:decentralized", market.name);
    for (i, &payoff) in da_payoffs.iter().enumerate() {
        let matched = da.values().filter(|&&a| a == i).count();
        out.rows.push(ResultRow::new(experiment, 0, i, &da_method, payoff).matched(matched));
    }
    for (i, &payoff) in decentralized.payoffs.iter().enumerate() {
        let matched = decentralized.matches_of(i).len();
        out.rows.push(ResultRow::new(experiment, 0, i, &dm_method, payoff).stages(stages).matched(matched));
    }
    push_matching(out, market.name, "deferred_acceptance", &da);
    push_matching(out, market.name, "decentralized", &decentralized.matched);
    Ok(())
}

fn push_matching(out: &mut ExperimentOutput, instance: &str, method: &str, matching: &BTreeMap<usize, usize>) {
    for (&arm, &agent) in matching {
        out.matchings.push(MatchingRow { instance: instance.into(), method: method.into(), arm, agent });
    }
}

pub(super) fn write_matchings(path: &Path, rows: &[MatchingRow]) -> Result<()> {
    let parse = |e: csv::Error| Error::Parse { path: path.to_path_buf(), line: 0, field: String::new(), message: e.to_string() };
    let mut writer = csv::Writer::from_path(path).map_err(parse)?;
    for row in rows {
        writer.serialize(row).map_err(parse)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentName;

    fn pairs(out: &ExperimentOutput, instance: &str, method: &str) -> Vec<(usize, usize)> {
        out.matchings
            .iter()
            .filter(|m| m.instance == instance && m.method == method)
            .map(|m| (m.arm, m.agent))
            .collect()
    }

    #[test]
    fn both_small_instances_give_the_known_matchings() {
        let out = run(&ExperimentConfig::named(ExperimentName::DaComparison)).unwrap();
        assert_eq!(pairs(&out, "quota_market", "deferred_acceptance"), vec![(0, 2), (1, 1), (2, 0), (3, 0)]);
        assert_eq!(pairs(&out, "quota_market", "decentralized"), vec![(0, 0), (1, 0), (2, 2), (3, 1)]);
        assert_eq!(pairs(&out, "unit_market", "deferred_acceptance"), vec![(0, 3), (1, 2), (2, 0), (3, 1)]);
        assert_eq!(pairs(&out, "unit_market", "decentralized"), vec![(0, 0), (1, 2), (2, 1), (3, 3)]);
    }

    #[test]
    fn first_and_third_agents_prefer_the_decentralized_outcome() {
        let out = run(&ExperimentConfig::named(ExperimentName::DaComparison)).unwrap();
        let payoff = |method: &str, agent: usize| {
            out.rows.iter().find(|r| r.method == method && r.agent_id == agent).unwrap().payoff
        };
        for agent in [0, 2] {
            assert!(payoff("quota_market:decentralized", agent) > payoff("quota_market:deferred_acceptance", agent));
        }
    }
}
