//! Experiment runners. Each returns its result rows; `run` writes them.

mod adachi;
mod custom;
mod da_comparison;
mod graduate;
mod multi_vs_single;
mod tables;
mod three_agent;

use std::path::PathBuf;

use rayon::prelude::*;
use stagematch::{Error, Result};

use crate::config::{ExperimentConfig, ExperimentName};
use crate::output::{write_rows, ResultRow};

pub use adachi::AdachiParams;
pub use custom::CustomParams;
pub use da_comparison::{DaComparisonParams, MatchingRow};
pub use graduate::GraduateParams;
pub use multi_vs_single::MultiVsSingleParams;
pub use tables::{quota_market, unit_market, SmallMarket};
pub use three_agent::{relative_changes, ThreeAgentParams};

/// Rows of one experiment plus any extra tables, keyed by file stem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub matchings: Vec<MatchingRow>,
}

pub fn run_rows(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match config.experiment {
        ExperimentName::GraduateAdmissions => graduate::run(config).map(rows_only),
        ExperimentName::ThreeAgent => three_agent::run(config).map(rows_only),
        ExperimentName::AdachiSearch => adachi::run(config).map(rows_only),
        ExperimentName::DaComparison => da_comparison::run(config),
        ExperimentName::MultiVsSingle => multi_vs_single::run(config).map(rows_only),
        ExperimentName::Custom => custom::run(config).map(rows_only),
    })
}

fn rows_only(rows: Vec<ResultRow>) -> ExperimentOutput {
    ExperimentOutput { rows, matchings: Vec::new() }
}

/// Runs the experiment and writes `<output>/<experiment>.csv` (plus
/// `<experiment>_matchings.csv` when there are matchings). Returns the
/// written paths.
pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = run_rows(config)?;
    std::fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    let name = config.experiment.as_str();
    let main = config.output.join(format!("{name}.csv"));
    write_rows(&main, &out.rows)?;
    let mut written = vec![main];
    if !out.matchings.is_empty() {
        let path = config.output.join(format!("{name}_matchings.csv"));
        da_comparison::write_matchings(&path, &out.matchings)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs `replication(r, seed)` for every replication on the current pool
/// and concatenates the rows in replication order.
fn replicate<F>(config: &ExperimentConfig, replication: F) -> Result<Vec<ResultRow>>
where
    F: Fn(usize, u64) -> Result<Vec<ResultRow>> + Sync,
{
    let per_rep = (0..config.replications)
        .into_par_iter()
        .map(|r| replication(r, config.seed_for(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}
