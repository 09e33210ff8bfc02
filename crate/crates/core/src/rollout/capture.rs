//! Memory accounting for pre-captured execution graphs.
//!
//! A vanilla plan captures both models for every strategy in every batch
//! bucket. The bucketed plan captures a bucket only for the strategies the
//! tuner can route to it, splits target and draft captures, and shares a
//! capture between strategies whose relevant parameters coincide.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::mab::{BegMab, MabError, DEFAULT_EPSILON, DEFAULT_WINDOW};
use crate::spec::SpecStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Side {
    Target,
    Draft,
}

/// Parameters a capture is specialised on; `None` fields are irrelevant to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaptureParams {
    pub tokens_to_verify: Option<usize>,
    pub top_k: Option<usize>,
    pub draft_depth: Option<usize>,
}

impl CaptureParams {
    fn full(s: &SpecStrategy) -> Self {
        Self {
            tokens_to_verify: Some(s.tokens_to_verify),
            top_k: Some(s.top_k),
            draft_depth: Some(s.draft_depth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureEntry {
    pub side: Side,
    /// Inclusive batch-size range.
    pub bucket: (usize, usize),
    pub params: CaptureParams,
    pub memory_units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturePlan {
    pub entries: Vec<CaptureEntry>,
    pub total_memory_units: f64,
}

impl CapturePlan {
    fn from_entries(entries: Vec<CaptureEntry>) -> Self {
        let total_memory_units = entries.iter().map(|e| e.memory_units).sum();
        Self {
            entries,
            total_memory_units,
        }
    }

    pub fn count(&self, side: Side) -> usize {
        self.entries.iter().filter(|e| e.side == side).count()
    }
}

/// Bucket thresholds, with the open last bucket closed at `max_batch`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSpec {
    pub thresholds: Vec<usize>,
    pub max_batch: usize,
}

impl BucketSpec {
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        self.thresholds
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let high = self
                    .thresholds
                    .get(i + 1)
                    .map(|&n| n - 1)
                    .unwrap_or(self.max_batch.max(t));
                (t, high)
            })
            .collect()
    }
}

/// Units proportional to the bucket's largest batch times the token
/// dimension: `tokens_to_verify` on the target side, `top_k` on the draft side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModel {
    pub units_per_slot: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self {
            units_per_slot: 1.0,
        }
    }
}

impl MemoryModel {
    pub fn units(&self, side: Side, bucket: (usize, usize), params: &CaptureParams) -> f64 {
        let dim = match side {
            Side::Target => params.tokens_to_verify,
            Side::Draft => params.top_k,
        }
        .expect("capture params carry the side's token dimension");
        self.units_per_slot * (bucket.1 * dim) as f64
    }
}

/// Every strategy, every bucket, both sides.
pub fn vanilla_plan(
    strategies: &[SpecStrategy],
    buckets: &BucketSpec,
    memory: &MemoryModel,
) -> CapturePlan {
    let mut entries = Vec::new();
    for s in strategies {
        for range in buckets.ranges() {
            for side in [Side::Target, Side::Draft] {
                let params = CaptureParams::full(s);
                entries.push(CaptureEntry {
                    side,
                    bucket: range,
                    params,
                    memory_units: memory.units(side, range, &params),
                });
            }
        }
    }
    CapturePlan::from_entries(entries)
}

/// Captures each bucket only for its routed group, with one target entry per
/// distinct `tokens_to_verify` and one draft entry per distinct
/// `(top_k, draft_depth)`.
pub fn plan_captures(
    strategies: &[SpecStrategy],
    buckets: &BucketSpec,
    memory: &MemoryModel,
) -> Result<CapturePlan, MabError> {
    let mab = BegMab::new(
        strategies.to_vec(),
        buckets.thresholds.clone(),
        DEFAULT_EPSILON,
        DEFAULT_WINDOW,
    )?;
    let mut entries = Vec::new();
    for (b, range) in buckets.ranges().into_iter().enumerate() {
        let group = mab.group(b);
        let target: BTreeSet<usize> = group.iter().map(|s| s.tokens_to_verify).collect();
        let draft: BTreeSet<(usize, usize)> =
            group.iter().map(|s| (s.top_k, s.draft_depth)).collect();
        for t in target {
            let params = CaptureParams {
                tokens_to_verify: Some(t),
                top_k: None,
                draft_depth: None,
            };
            entries.push(CaptureEntry {
                side: Side::Target,
                bucket: range,
                params,
                memory_units: memory.units(Side::Target, range, &params),
            });
        }
        for (k, d) in draft {
            let params = CaptureParams {
                tokens_to_verify: None,
                top_k: Some(k),
                draft_depth: Some(d),
            };
            entries.push(CaptureEntry {
                side: Side::Draft,
                bucket: range,
                params,
                memory_units: memory.units(Side::Draft, range, &params),
            });
        }
    }
    Ok(CapturePlan::from_entries(entries))
}
