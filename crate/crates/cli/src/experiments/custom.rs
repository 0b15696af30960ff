//! A user-supplied market instance run under its agents' own strategies.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stagematch::market::{run_multistage_match, Instance};
use stagematch::metrics::justified_envy_report;
use stagematch::{Error, Result};

use super::replicate;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomParams {
    /// Instance file; relative paths resolve against the working directory.
    pub instance: Option<PathBuf>,
}

pub(super) fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params: CustomParams = config.params()?;
    let path = params
        .instance
        .ok_or_else(|| Error::Config("custom runs need `instance = \"<file>\"` under [params]".into()))?;
    let instance = Instance::load(&path)?;
    let preferences = instance.preference_model()?;
    replicate(config, |r, seed| {
        let out = run_multistage_match(&instance.arms, &instance.agents, &preferences, instance.stages, seed)?;
        let envy = justified_envy_report(&out, &instance.arms, &instance.agents, &preferences)?;
        Ok(instance
            .agents
            .iter()
            .enumerate()
            .map(|(i, agent)| {
                ResultRow::new("custom", r, i, strategy_name(&agent.strategy), out.payoffs[i])
                    .stages(out.stages_run)
                    .matched(out.matches_of(i).len())
                    .envy(envy.level)
            })
            .collect())
    })
}

fn strategy_name(spec: &stagematch::market::StrategySpec) -> &'static str {
    use stagematch::market::StrategySpec::*;
    match spec {
        SimpleCutoff => "simple_cutoff",
        Scripted { .. } => "scripted",
        RandomProposing => "random_proposing",
        LubCdm { .. } => "lub_cdm",
        Cdm { .. } => "cdm",
    }
}
