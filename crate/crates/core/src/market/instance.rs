use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    run_multistage_match, validate_market, AgentProfile, Arm, ArmUtilities, MatchOutcome,
    StrategySpec,
};
use crate::error::{Error, Result};

/// Arm-side preference parameters in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreferenceSpec {
    /// One ranked agent list per arm, best first; unlisted agents are unacceptable.
    Ranked {
        rankings: Vec<Vec<usize>>,
        #[serde(default)]
        state: f64,
    },
    /// A value per (arm, agent); listed `[arm, agent]` pairs are unacceptable.
    Values {
        values: Vec<Vec<f64>>,
        #[serde(default)]
        unacceptable: Vec<[usize; 2]>,
        #[serde(default)]
        state: f64,
    },
    /// `base + sensitivity * state + noise * Gumbel` per (arm, agent).
    Popularity {
        base: Vec<f64>,
        sensitivity: Vec<f64>,
        noise: f64,
        state: f64,
        seed: u64,
    },
}

/// A complete market description loadable from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub stages: usize,
    #[serde(default)]
    pub seed: u64,
    pub arms: Vec<Arm>,
    pub agents: Vec<AgentProfile>,
    pub preferences: PreferenceSpec,
}

impl Instance {
    /// Reads an instance file. History paths in strategies are resolved
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut instance = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for agent in &mut instance.agents {
            if let StrategySpec::LubCdm { history, .. } | StrategySpec::Cdm { history, .. } =
                &mut agent.strategy
            {
                let resolved: PathBuf = base.join(&*history);
                *history = resolved.to_string_lossy().into_owned();
            }
        }
        Ok(instance)
    }

    /// Parses and validates instance text; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let instance: Instance = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                field: field_from_message(e.message()),
                message: e.message().trim().to_string(),
            }
        })?;
        instance.check(text, path)?;
        Ok(instance)
    }

    fn check(&self, text: &str, path: &Path) -> Result<()> {
        let located = |table: &str, index: usize, field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_of_table(text, table, index),
            field: field.to_string(),
            message,
        };
        for (pos, arm) in self.arms.iter().enumerate() {
            if arm.fits.len() != self.agents.len() {
                return Err(located(
                    "arms",
                    pos,
                    "fits",
                    format!("expected {} fits, found {}", self.agents.len(), arm.fits.len()),
                ));
            }
            if !(arm.score >= 0.0) {
                return Err(located("arms", pos, "score", "score must be nonnegative".into()));
            }
            if arm.fits.iter().any(|f| !(*f >= 0.0)) {
                return Err(located("arms", pos, "fits", "fits must be nonnegative".into()));
            }
        }
        for (pos, agent) in self.agents.iter().enumerate() {
            if agent.eta_schedule.len() != self.stages {
                return Err(located(
                    "agents",
                    pos,
                    "eta_schedule",
                    format!("expected {} entries", self.stages),
                ));
            }
        }
        let model_line = line_of_table(text, "preferences", 0);
        let model_err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: model_line,
            field: field.to_string(),
            message,
        };
        match &self.preferences {
            PreferenceSpec::Ranked { rankings, .. } if rankings.len() != self.arms.len() => {
                return Err(model_err("rankings", "need one ranking per arm".into()));
            }
            PreferenceSpec::Values { values, .. } if values.len() != self.arms.len() => {
                return Err(model_err("values", "need one row per arm".into()));
            }
            PreferenceSpec::Popularity { base, .. } if base.len() != self.agents.len() => {
                return Err(model_err("base", "need one entry per agent".into()));
            }
            _ => {}
        }
        self.preference_model()
            .map_err(|e| model_err("preferences", e.to_string()))?;
        validate_market(&self.arms, &self.agents, self.stages).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            field: "agents".into(),
            message: e.to_string(),
        })
    }

    /// Builds the arm-side preference model.
    pub fn preference_model(&self) -> Result<ArmUtilities> {
        let m = self.agents.len();
        match &self.preferences {
            PreferenceSpec::Ranked { rankings, state } => {
                let mut prefs = ArmUtilities::from_rankings(rankings, m)?;
                prefs.state = *state;
                Ok(prefs)
            }
            PreferenceSpec::Values {
                values,
                unacceptable,
                state,
            } => {
                let rows = values
                    .iter()
                    .map(|row| {
                        if row.len() != m {
                            return Err(Error::Preferences(format!(
                                "value row has {} entries for {m} agents",
                                row.len()
                            )));
                        }
                        Ok(row.iter().map(|&v| Some(v)).collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut prefs = ArmUtilities::from_values(*state, rows);
                for &[arm, agent] in unacceptable {
                    if arm >= prefs.arm_count() || agent >= m {
                        return Err(Error::Preferences(format!(
                            "unknown pair ({arm}, {agent})"
                        )));
                    }
                    prefs.reject(arm, agent);
                }
                Ok(prefs)
            }
            PreferenceSpec::Popularity {
                base,
                sensitivity,
                noise,
                state,
                seed,
            } => ArmUtilities::popularity(self.arms.len(), base, sensitivity, *noise, *state, *seed),
        }
    }

    /// Runs the instance with strategies built from its specs.
    pub fn run(&self) -> Result<MatchOutcome> {
        let prefs = self.preference_model()?;
        run_multistage_match(&self.arms, &self.agents, &prefs, self.stages, self.seed)
    }
}

fn field_from_message(message: &str) -> String {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "document".into()
}

/// 1-based line of the `index`-th `[[table]]` (or `[table]`) header, 0 if absent.
fn line_of_table(text: &str, table: &str, index: usize) -> usize {
    let array = format!("[[{table}]]");
    let single = format!("[{table}]");
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            t == array || t == single
        })
        .nth(index)
        .map(|(n, _)| n + 1)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
stages = 2
seed = 3

[[arms]]
id = 0
score = 1.0
fits = [0.5]

[[arms]]
id = 1
score = 0.5
fits = [0.0]

[[agents]]
id = 0
quota = 1
penalty = 4.0
eta_schedule = [0.0, 0.0]
strategy = { name = "simple_cutoff" }

[preferences]
model = "ranked"
rankings = [[0], [0]]
"#;

    #[test]
    fn parses_and_runs() {
        let inst = Instance::parse(SMALL, Path::new("small.toml")).unwrap();
        let out = inst.run().unwrap();
        assert_eq!(out.pairs(), vec![(0, 0)]);
    }

    #[test]
    fn unknown_fields_report_line_and_name() {
        let text = SMALL.replace("quota = 1", "quota = 1\nquotum = 2");
        match Instance::parse(&text, Path::new("x.toml")).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(field, "quotum");
                assert!(line > 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wrong_fit_count_points_at_the_arm() {
        let text = SMALL.replace("fits = [0.0]", "fits = [0.0, 1.0]");
        match Instance::parse(&text, Path::new("x.toml")).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(field, "fits");
                assert_eq!(line, 10);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nonzero_last_stage_eta_is_rejected() {
        let text = SMALL.replace("eta_schedule = [0.0, 0.0]", "eta_schedule = [0.1, 0.1]");
        assert!(Instance::parse(&text, Path::new("x.toml")).is_err());
    }
}
