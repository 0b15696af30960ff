//! Experiment configuration files.
//!
//! ```toml
//! experiment = "three_agent"
//! replications = 200
//! seed = 7
//! output = "results"
//!
//! [params]
//! etas = [0.05, 0.1]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stagematch::{Error, Result};

pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    GraduateAdmissions,
    ThreeAgent,
    AdachiSearch,
    DaComparison,
    MultiVsSingle,
    Custom,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::GraduateAdmissions,
        ExperimentName::ThreeAgent,
        ExperimentName::AdachiSearch,
        ExperimentName::DaComparison,
        ExperimentName::MultiVsSingle,
        ExperimentName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::GraduateAdmissions => "graduate_admissions",
            ExperimentName::ThreeAgent => "three_agent",
            ExperimentName::AdachiSearch => "adachi_search",
            ExperimentName::DaComparison => "da_comparison",
            ExperimentName::MultiVsSingle => "multi_vs_single",
            ExperimentName::Custom => "custom",
        }
    }

    /// Seed stream tag: per-replication seeds are
    /// `derive_seed(master, stream, replication)`.
    pub fn stream(self) -> u64 {
        Self::ALL.iter().position(|&e| e == self).unwrap() as u64 + 1
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentName::GraduateAdmissions => "50 colleges in three tiers, learned strategy vs simple cutoff",
            ExperimentName::ThreeAgent => "two-state, three-agent market, payoff change from regularization",
            ExperimentName::AdachiSearch => "one-arm-per-stage search with convex vs concave reservation schedules",
            ExperimentName::DaComparison => "deferred acceptance vs two-stage straightforward play on a small instance",
            ExperimentName::MultiVsSingle => "single-stage play vs its multi-stage replay",
            ExperimentName::Custom => "market instance file run under its agents' strategies",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|e| e.as_str()).collect();
            Error::Config(format!("unknown experiment `{s}`; valid names: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; `None` lets the pool decide.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Experiment-specific parameters; unknown keys are rejected when the
    /// experiment parses them.
    #[serde(default)]
    pub params: toml::Table,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Defaults for `experiment`.
    pub fn named(experiment: ExperimentName) -> Self {
        ExperimentConfig {
            experiment,
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            output: default_output(),
            workers: None,
            params: toml::Table::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            field: String::new(),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The parameter block as `T`, with defaults for missing keys.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[params] for {}: {}", self.experiment, e.message())))
    }

    pub fn seed_for(&self, replication: usize) -> u64 {
        stagematch::stats::derive_seed(self.seed, self.experiment.stream(), replication as u64)
    }

    /// Seed for work shared by all replications, such as training histories.
    pub fn shared_seed(&self, tag: u64) -> u64 {
        stagematch::stats::derive_seed(self.seed, self.experiment.stream() << 32 | tag, u64::MAX)
    }
}
