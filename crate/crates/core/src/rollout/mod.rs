//! Rollout simulation: long-tail workloads, the roofline clock, elastic
//! speculation and capture-plan accounting.

mod capture;
mod cost;
mod engine;
mod trace;
mod workload;

pub use capture::{
    plan_captures, vanilla_plan, BucketSpec, CaptureEntry, CaptureParams, CapturePlan, MemoryModel,
    Side,
};
pub use cost::{
    sd_speedup, should_enable_sd, step_latency, CostModelParams, DEFAULT_ELASTIC_THRESHOLD,
};
pub use engine::{
    run_rollout, DrafterKind, DrafterSnapshot, Drafters, RolloutConfig, RolloutOutcome, StepMetrics,
};
pub use trace::{to_csv, trace_csv, trace_json_lines, trace_records, TraceRecord};
pub use workload::{
    generate_workload, sample_response_length, LengthDistribution, RequestStatus, RolloutRequest,
    WorkloadConfig,
};
