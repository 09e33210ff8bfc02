use serde::{Deserialize, Serialize};

use crate::spec::SpecStrategy;

/// Roofline step latency: a fixed launch cost plus the larger of weight
/// streaming and compute, plus sequential draft levels when speculating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelParams {
    pub t_launch: f64,
    pub model_bytes: f64,
    pub mem_bw: f64,
    pub flops_per_token: f64,
    pub peak_flops: f64,
    pub drafter_step_cost: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl CostModelParams {
    /// Fitted so that the default workload model reproduces the batch-size
    /// sweep for depth 10, top_k 8.
    pub fn calibrated() -> Self {
        Self {
            t_launch: 3.44,
            model_bytes: 1.0,
            mem_bw: 1.0,
            flops_per_token: 0.00425,
            peak_flops: 1.0,
            drafter_step_cost: 0.162,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("t_launch", self.t_launch),
            ("model_bytes", self.model_bytes),
            ("mem_bw", self.mem_bw),
            ("flops_per_token", self.flops_per_token),
            ("peak_flops", self.peak_flops),
            ("drafter_step_cost", self.drafter_step_cost),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Verification time for `batch` requests of `tokens_per_request` tokens.
    pub fn verify_time(&self, batch: usize, tokens_per_request: usize) -> f64 {
        let memory = self.model_bytes / self.mem_bw;
        let compute = (batch * tokens_per_request) as f64 * self.flops_per_token / self.peak_flops;
        self.t_launch + memory.max(compute)
    }
}

/// One engine step. Without a strategy each request verifies one token.
pub fn step_latency(cost: &CostModelParams, batch: usize, sd: Option<&SpecStrategy>) -> f64 {
    assert!(batch >= 1, "batch must be at least 1");
    match sd {
        None => cost.verify_time(batch, 1),
        Some(s) => {
            cost.verify_time(batch, s.tokens_to_verify)
                + s.draft_depth as f64 * cost.drafter_step_cost
        }
    }
}

/// Tokens per time with speculation over tokens per time without, given the
/// mean number of tokens each request emits per speculative step.
pub fn sd_speedup(
    cost: &CostModelParams,
    batch: usize,
    strategy: &SpecStrategy,
    mean_emitted: f64,
) -> f64 {
    mean_emitted * step_latency(cost, batch, None) / step_latency(cost, batch, Some(strategy))
}

/// True iff fewer than `threshold` requests are still running.
pub fn should_enable_sd(active_requests: usize, threshold: usize) -> bool {
    assert!(threshold >= 1, "threshold must be at least 1");
    active_requests < threshold
}

pub const DEFAULT_ELASTIC_THRESHOLD: usize = 32;
