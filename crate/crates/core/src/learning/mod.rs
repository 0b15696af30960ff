//! Estimating acceptance probabilities and state distributions from history.
//!
//! One model is fit per (agent, stage) by penalized kernel logistic
//! regression with a product of Gaussian kernels over state and score.

mod density;
mod klr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Arm, MatchOutcome};

pub use density::{fit_state_density, StateDensity};
pub use klr::{
    fit_acceptance_model, fit_kernel_logistic, KernelParams, LearnerConfig, LubValue,
    FittedAcceptanceModel, ModelCurves,
};

/// One historical pull: who was pulled, in which state, and whether they accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub t: u64,
    pub k: usize,
    pub state: f64,
    pub score: f64,
    pub fit: f64,
    pub accepted: u8,
}

impl HistoryRecord {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.accepted > 1 {
            return Err(("accepted", format!("expected 0 or 1, got {}", self.accepted)));
        }
        if !(0.0..=1.0).contains(&self.state) {
            return Err(("state", format!("{} outside [0,1]", self.state)));
        }
        if !self.score.is_finite() {
            return Err(("score", "not finite".into()));
        }
        Ok(())
    }
}

/// Records for one stage.
pub fn stage_records(history: &[HistoryRecord], stage: usize) -> Vec<HistoryRecord> {
    history.iter().filter(|r| r.k == stage).copied().collect()
}

/// One state per period, in period order.
pub fn period_states(history: &[HistoryRecord]) -> Vec<f64> {
    let mut seen = std::collections::BTreeMap::new();
    for r in history {
        seen.entry(r.t).or_insert(r.state);
    }
    seen.into_values().collect()
}

/// Records of `agent`'s pulls in one market run, all tagged with the
/// period `t` and the agent's state in that period.
pub fn history_from_outcome(outcome: &MatchOutcome, arms: &[Arm], agent: usize, t: u64, state: f64) -> Vec<HistoryRecord> {
    let mut out = Vec::new();
    for (k, pulled) in outcome.pulls[agent].iter().enumerate() {
        for &j in pulled {
            out.push(HistoryRecord {
                t,
                k: k + 1,
                state,
                score: arms[j].score,
                fit: arms[j].fits[agent],
                accepted: outcome.accepts[agent][k].contains(&j) as u8,
            });
        }
    }
    out
}

/// Reads a history file with header `t,k,state,score,fit,accepted`.
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["t", "k", "state", "score", "fit", "accepted"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "header".into(),
            message: format!("expected columns {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<HistoryRecord>() {
        let record = row.map_err(|e| csv_error(path, e))?;
        if let Err((field, message)) = record.validate() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: out.len() + 2,
                field: field.into(),
                message,
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Writes records with the header row.
pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in history {
        writer.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, field) = match e.position() {
        Some(p) => (p.line() as usize, String::new()),
        None => (0, String::new()),
    };
    let field = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err
            .field()
            .map(|i| ["t", "k", "state", "score", "fit", "accepted"][i as usize].to_string())
            .unwrap_or(field),
        _ => field,
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let history = vec![
            HistoryRecord { t: 0, k: 1, state: 0.25, score: 0.7, fit: 0.1, accepted: 1 },
            HistoryRecord { t: 1, k: 2, state: 0.5, score: 0.1 + 0.2, fit: 0.0, accepted: 0 },
        ];
        write_history(&path, &history).unwrap();
        assert_eq!(read_history(&path).unwrap(), history);
    }

    #[test]
    fn bad_rows_report_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "t,k,state,score,fit,accepted\n0,1,0.5,0.2,0.1,1\n1,1,1.5,0.2,0.1,0\n")
            .unwrap();
        match read_history(&path).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "state");
            }
            other => panic!("unexpected {other}"),
        }
        std::fs::write(&path, "t,k,state,score,fit,accepted\n0,1,0.5,x,0.1,1\n").unwrap();
        match read_history(&path).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "score");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "t,k,state,score,fit\n").unwrap();
        assert!(read_history(&path).is_err());
    }

    #[test]
    fn outcome_records_follow_pulls_and_accepts() {
        use crate::market::{run_multistage_match, AgentProfile, ArmUtilities};
        let arms = vec![Arm::new(0, 0.9, vec![0.1]), Arm::new(1, 0.4, vec![0.2])];
        let agents = vec![AgentProfile::new(0, 2, 5.0, 2)];
        let prefs = ArmUtilities::from_rankings(&[vec![0], vec![]], 1).unwrap();
        let out = run_multistage_match(&arms, &agents, &prefs, 2, 0).unwrap();
        let records = history_from_outcome(&out, &arms, 0, 7, 0.3);
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.t == 7 && r.state == 0.3 && r.k == 1));
        assert_eq!(records.iter().map(|r| r.accepted).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(records[1].fit, 0.2);
    }

    #[test]
    fn period_states_take_one_value_per_period() {
        let r = |t, state| HistoryRecord { t, k: 1, state, score: 0.0, fit: 0.0, accepted: 0 };
        assert_eq!(period_states(&[r(2, 0.3), r(1, 0.6), r(2, 0.3)]), vec![0.6, 0.3]);
    }
}
