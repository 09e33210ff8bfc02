use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use crate::rollout::{plan_captures, vanilla_plan, BucketSpec, CapturePlan, MemoryModel, Side};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub plan: String,
    pub side: String,
    pub bucket_low: usize,
    pub bucket_high: usize,
    pub tokens_to_verify: Option<usize>,
    pub top_k: Option<usize>,
    pub draft_depth: Option<usize>,
    pub memory_units: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub strategies: usize,
    pub buckets: usize,
    pub vanilla_entries: usize,
    pub bucketed_entries: usize,
    pub vanilla_units: f64,
    pub bucketed_units: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub summary: PlanSummary,
    pub entries: Vec<PlanRow>,
}

fn rows<'a>(name: &str, plan: &'a CapturePlan) -> impl Iterator<Item = PlanRow> + 'a {
    let name = name.to_string();
    plan.entries.iter().map(move |e| PlanRow {
        plan: name.clone(),
        side: match e.side {
            Side::Target => "TARGET",
            Side::Draft => "DRAFT",
        }
        .into(),
        bucket_low: e.bucket.0,
        bucket_high: e.bucket.1,
        tokens_to_verify: e.params.tokens_to_verify,
        top_k: e.params.top_k,
        draft_depth: e.params.draft_depth,
        memory_units: e.memory_units,
    })
}

/// Vanilla and bucketed capture plans for the configured strategies and
/// tuner buckets, the last bucket closed at the elastic threshold.
pub fn run_plan(cfg: &ExperimentConfig) -> Result<PlanReport, ConfigError> {
    cfg.validate()?;
    let buckets = BucketSpec {
        thresholds: cfg.tuner.thresholds.clone(),
        max_batch: cfg.rollout.elastic_threshold,
    };
    let memory = MemoryModel::default();
    let vanilla = vanilla_plan(&cfg.tuner.strategies, &buckets, &memory);
    let bucketed = plan_captures(&cfg.tuner.strategies, &buckets, &memory)
        .map_err(|e| ConfigError::new("tuner", e.to_string()))?;
    Ok(PlanReport {
        summary: PlanSummary {
            strategies: cfg.tuner.strategies.len(),
            buckets: buckets.thresholds.len(),
            vanilla_entries: vanilla.entries.len(),
            bucketed_entries: bucketed.entries.len(),
            vanilla_units: vanilla.total_memory_units,
            bucketed_units: bucketed.total_memory_units,
            ratio: vanilla.total_memory_units / bucketed.total_memory_units,
        },
        entries: rows("vanilla", &vanilla)
            .chain(rows("bucketed", &bucketed))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_ratio() {
        let r = run_plan(&ExperimentConfig::default()).unwrap();
        assert_eq!(r.summary.vanilla_units, 10560.0);
        assert_eq!(r.summary.bucketed_units, 1832.0);
        assert!(r.summary.ratio >= 2.0);
        assert_eq!(
            r.entries.len(),
            r.summary.vanilla_entries + r.summary.bucketed_entries
        );
    }
}
