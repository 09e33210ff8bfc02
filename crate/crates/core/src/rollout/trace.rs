use serde::{Deserialize, Serialize};

use super::engine::{DrafterKind, StepMetrics};

/// Flat per-step record for CSV and JSON-lines export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub clock: f64,
    pub active: usize,
    pub sd_active: bool,
    pub draft_depth: Option<usize>,
    pub top_k: Option<usize>,
    pub tokens_to_verify: Option<usize>,
    pub drafter: Option<DrafterKind>,
    pub mean_accept: Option<f64>,
}

impl From<&StepMetrics> for TraceRecord {
    fn from(m: &StepMetrics) -> Self {
        Self {
            step: m.step,
            clock: m.clock,
            active: m.batch_size,
            sd_active: m.sd_active,
            draft_depth: m.strategy.map(|s| s.draft_depth),
            top_k: m.strategy.map(|s| s.top_k),
            tokens_to_verify: m.strategy.map(|s| s.tokens_to_verify),
            drafter: m.drafter,
            mean_accept: m.mean_accept(),
        }
    }
}

pub fn trace_records(trace: &[StepMetrics]) -> Vec<TraceRecord> {
    trace.iter().map(TraceRecord::from).collect()
}

pub fn trace_csv(trace: &[StepMetrics]) -> Result<String, csv::Error> {
    to_csv(&trace_records(trace))
}

pub fn trace_json_lines(trace: &[StepMetrics]) -> String {
    trace
        .iter()
        .map(|m| serde_json::to_string(&TraceRecord::from(m)).expect("record serialises") + "\n")
        .collect()
}

/// Serialises `rows` with a header line, even when `rows` is empty.
pub fn to_csv<T: Serialize + Default>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.serialize(T::default())?;
    } else {
        for r in rows {
            w.serialize(r)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    let mut text = String::from_utf8(bytes).expect("csv output is utf-8");
    if rows.is_empty() {
        let header_end = text.find('\n').map_or(text.len(), |i| i + 1);
        text.truncate(header_end);
    }
    Ok(text)
}

impl Default for TraceRecord {
    fn default() -> Self {
        Self {
            step: 0,
            clock: 0.0,
            active: 0,
            sd_active: false,
            draft_depth: None,
            top_k: None,
            tokens_to_verify: None,
            drafter: None,
            mean_accept: None,
        }
    }
}
