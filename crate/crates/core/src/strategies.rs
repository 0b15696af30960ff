//! Building engine strategies from their specifications.

use std::sync::Arc;

use crate::baselines::{RandomProposing, Scripted, SimpleCutoff};
use crate::error::Result;
use crate::learning::read_history;
use crate::lub_cdm::{LubCdmConfig, LubCdmStrategy};
use crate::market::{Strategy, StrategySpec};

pub fn build(spec: &StrategySpec) -> Result<Box<dyn Strategy>> {
    Ok(match spec {
        StrategySpec::SimpleCutoff => Box::new(SimpleCutoff),
        StrategySpec::RandomProposing => Box::new(RandomProposing),
        StrategySpec::Scripted { stages } => Box::new(Scripted { stages: stages.clone() }),
        StrategySpec::LubCdm { history, calibration } | StrategySpec::Cdm { history, calibration } => {
            let records = Arc::new(read_history(history)?);
            let config = LubCdmConfig {
                calibration: *calibration,
                zero_eta: matches!(spec, StrategySpec::Cdm { .. }),
                ..LubCdmConfig::default()
            };
            Box::new(LubCdmStrategy::new(records, config))
        }
    })
}
