use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fsm::FsmReport;
use super::plan::PlanReport;
use super::run::RunReport;
use super::tune::TuneReport;
use super::verify::VerifyReport;
use crate::rollout::to_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {name}: {message}")]
    Encode { name: String, message: String },
}

/// A report that can be written as one JSON document or several CSV tables.
pub trait Emit: Serialize {
    const JSON_FILE: &'static str;
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error>;
    /// Files written next to the JSON document.
    fn json_extras(&self) -> Vec<(&'static str, String)> {
        Vec::new()
    }
}

impl Emit for RunReport {
    const JSON_FILE: &'static str = "report.json";
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        Ok(vec![
            ("steps.csv", to_csv(&self.steps)?),
            ("mab_selections.csv", to_csv(&self.selections)?),
            ("accept_by_position.csv", to_csv(&self.accept_by_position)?),
            ("speedup_vs_batch.csv", to_csv(&self.speedup_vs_batch)?),
            ("capture_memory.csv", to_csv(&self.capture_memory)?),
            ("mab_rewards.csv", to_csv(&self.mab_rewards)?),
            ("engine_trace.csv", to_csv(&self.engine_trace)?),
        ])
    }
    fn json_extras(&self) -> Vec<(&'static str, String)> {
        let lines = self
            .engine_trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace row serialises") + "\n")
            .collect();
        vec![("engine_trace.jsonl", lines)]
    }
}

impl Emit for TuneReport {
    const JSON_FILE: &'static str = "tune.json";
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        Ok(vec![
            (
                "tune_summary.csv",
                to_csv(std::slice::from_ref(&self.summary))?,
            ),
            ("tune_rounds.csv", to_csv(&self.rounds)?),
        ])
    }
}

impl Emit for VerifyReport {
    const JSON_FILE: &'static str = "verify.json";
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        Ok(vec![
            ("verify_cases.csv", to_csv(&self.cases)?),
            ("verify_sampled.csv", to_csv(&self.sampled)?),
        ])
    }
}

impl Emit for PlanReport {
    const JSON_FILE: &'static str = "plan.json";
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        Ok(vec![
            (
                "plan_summary.csv",
                to_csv(std::slice::from_ref(&self.summary))?,
            ),
            ("plan_entries.csv", to_csv(&self.entries)?),
        ])
    }
}

impl Emit for FsmReport {
    const JSON_FILE: &'static str = "fsm.json";
    fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        Ok(vec![
            ("fsm_events.csv", to_csv(&self.events)?),
            ("fsm_workers.csv", to_csv(&self.workers)?),
        ])
    }
}

/// Writes the report into `dir` (created if missing) and returns the files
/// written. Output depends only on the report contents.
pub fn emit_report<R: Emit>(
    report: &R,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    let files = match format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(report).map_err(|e| ReportError::Encode {
                name: R::JSON_FILE.into(),
                message: e.to_string(),
            })?;
            let mut files = vec![(R::JSON_FILE, text + "\n")];
            files.extend(report.json_extras());
            files
        }
        OutputFormat::Csv => report.csv_tables().map_err(|e| ReportError::Encode {
            name: "csv".into(),
            message: e.to_string(),
        })?,
    };
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| ReportError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&RunReport::default(), dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(files.len(), 7);
        for f in files {
            let text = fs::read_to_string(f).unwrap();
            assert_eq!(text.lines().count(), 1, "{text}");
        }
        let steps = fs::read_to_string(dir.path().join("steps.csv")).unwrap();
        assert!(steps.starts_with("step,baseline_time,tlt_time,speedup,"));
    }

    #[test]
    fn json_report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&RunReport::default(), dir.path(), OutputFormat::Json).unwrap();
        let back: RunReport =
            serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(back, RunReport::default());
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(
            &RunReport::default(),
            &blocker.join("out"),
            OutputFormat::Csv,
        )
        .unwrap_err();
        assert!(matches!(err, ReportError::Io { .. }));
    }
}
