//! The small fixed markets used by several experiments.

use stagematch::market::{AgentProfile, Arm, ArmUtilities};
use stagematch::Result;

/// Arms, agents and arm-side preferences of a small market.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMarket {
    pub name: &'static str,
    pub arms: Vec<Arm>,
    pub agents: Vec<AgentProfile>,
    pub preferences: ArmUtilities,
}

fn market(
    name: &'static str,
    utilities: &[&[f64]],
    scores: &[f64],
    quotas: &[usize],
    rankings: &[Vec<usize>],
    stages: usize,
) -> Result<SmallMarket> {
    let arms = scores
        .iter()
        .enumerate()
        .map(|(j, &v)| Arm::new(j, v, utilities.iter().map(|row| row[j] - v).collect()))
        .collect();
    let agents = quotas
        .iter()
        .enumerate()
        .map(|(i, &q)| AgentProfile::new(i, q, 10.0, stages))
        .collect();
    let preferences = ArmUtilities::from_rankings(rankings, quotas.len())?;
    Ok(SmallMarket { name, arms, agents, preferences })
}

/// Four arms, three agents with quotas (2, 1, 1).
pub fn quota_market(stages: usize) -> Result<SmallMarket> {
    market(
        "quota_market",
        &[&[3.0, 2.5, 2.0, 1.2], &[3.0, 2.5, 2.0, 1.5], &[2.5, 2.0, 3.0, 1.8]],
        &[2.0, 2.0, 2.0, 1.0],
        &[2, 1, 1],
        &[vec![2, 0, 1], vec![1, 0, 2], vec![0, 2, 1], vec![0, 1, 2]],
        stages,
    )
}

/// Four arms, four agents with unit quotas.
pub fn unit_market(stages: usize) -> Result<SmallMarket> {
    market(
        "unit_market",
        &[
            &[3.0, 2.0, 2.6, 2.3],
            &[2.0, 2.6, 3.0, 2.3],
            &[2.3, 2.0, 3.0, 2.6],
            &[2.0, 2.3, 2.6, 3.0],
        ],
        &[2.0, 2.0, 2.0, 2.0],
        &[1, 1, 1, 1],
        &[vec![3, 0, 2, 1], vec![2, 1, 3, 0], vec![0, 3, 1, 2], vec![1, 2, 0, 3]],
        stages,
    )
}
