//! Result rows and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stagematch::{Error, Result};

/// Column order of every result file.
pub const COLUMNS: [&str; 10] = [
    "experiment",
    "replication",
    "agent_id",
    "method",
    "stage_count",
    "student_count",
    "payoff",
    "envy_level",
    "matched_count",
    "eta",
];

/// One agent's result in one replication. Absent fields are written as
/// empty strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub replication: usize,
    pub agent_id: usize,
    pub method: String,
    pub stage_count: Option<usize>,
    pub student_count: Option<usize>,
    pub payoff: f64,
    pub envy_level: Option<usize>,
    pub matched_count: Option<usize>,
    pub eta: Option<f64>,
}

impl ResultRow {
    pub fn new(experiment: &str, replication: usize, agent_id: usize, method: &str, payoff: f64) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            replication,
            agent_id,
            method: method.to_string(),
            stage_count: None,
            student_count: None,
            payoff,
            envy_level: None,
            matched_count: None,
            eta: None,
        }
    }

    pub fn stages(mut self, k: usize) -> Self {
        self.stage_count = Some(k);
        self
    }

    pub fn students(mut self, n: usize) -> Self {
        self.student_count = Some(n);
        self
    }

    pub fn envy(mut self, level: usize) -> Self {
        self.envy_level = Some(level);
        self
    }

    pub fn matched(mut self, count: usize) -> Self {
        self.matched_count = Some(count);
        self
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    writer.write_record(COLUMNS).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "header".into(),
            message: format!("expected columns {}", COLUMNS.join(",")),
        });
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        field: String::new(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_fields_are_empty_and_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![
            ResultRow::new("x", 0, 1, "m", 1.5).stages(2),
            ResultRow::new("x", 1, 0, "m", -0.25).eta(0.1).matched(3).students(250).envy(0),
        ];
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "x,0,1,m,2,,1.5,,,");
        assert_eq!(read_rows(&path).unwrap(), rows);
    }

    #[test]
    fn empty_tables_still_have_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rows(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), COLUMNS.join(","));
    }
}
