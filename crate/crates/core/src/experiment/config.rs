use serde::{Deserialize, Serialize};

use crate::drafter::DrafterConfig;
use crate::mab::{BegMab, DEFAULT_EPSILON, DEFAULT_WINDOW};
use crate::rollout::{
    CostModelParams, LengthDistribution, RolloutConfig, WorkloadConfig, DEFAULT_ELASTIC_THRESHOLD,
};
use crate::spec::{DecodeMode, SpecStrategy};
use crate::spot::{SpotTrainConfig, DEFAULT_IDLE_THRESHOLD};
use crate::target::TargetShape;

/// A validation failure at a dotted config path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::new(path, message)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rl_steps: u64,
    pub target: TargetSection,
    pub drafter: DrafterSection,
    pub tuner: TunerSection,
    pub rollout: RolloutSection,
    pub cost: CostModelParams,
    pub workload: WorkloadSection,
    pub spot: SpotSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub vocab: usize,
    pub order: usize,
    pub concentration: f64,
    pub context_coupling: f64,
    pub temperature: f64,
    /// Weight of the fresh Dirichlet(1) row mixed in after every RL step.
    pub drift_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrafterSection {
    pub order: usize,
    pub smoothing_alpha: f64,
    /// `"none"` disables count halving.
    #[serde(with = "optional_limit")]
    pub count_cap: Option<u64>,
    /// Target tokens the drafter sees before the first RL step.
    pub warmup_tokens: usize,
    pub ngram_n: usize,
    pub ngram_continuation: usize,
    /// `false` freezes the drafter after warm-up and disables spot training.
    pub adapt: bool,
    /// `"none"` never falls back to the n-gram index.
    #[serde(with = "optional_limit")]
    pub staleness_bound: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub epsilon: f64,
    pub window: usize,
    pub thresholds: Vec<usize>,
    pub strategies: Vec<SpecStrategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub elastic_threshold: usize,
    pub mode: DecodeMode,
    /// `false` runs the TLT arm without speculation (baseline only).
    pub speculate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    pub mu: f64,
    pub sigma: f64,
    pub max_len: usize,
    pub requests: usize,
    pub responses_per_prompt: usize,
    pub prompt_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotSection {
    pub workers: u32,
    pub dp_groups: u32,
    pub idle_threshold: usize,
    /// Simulated time one training iteration takes.
    pub iteration_time: f64,
    pub retention: u64,
    pub train: SpotTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rl_steps: 6,
            target: TargetSection::default(),
            drafter: DrafterSection::default(),
            tuner: TunerSection::default(),
            rollout: RolloutSection::default(),
            cost: CostModelParams::calibrated(),
            workload: WorkloadSection::default(),
            spot: SpotSection::default(),
        }
    }
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            vocab: 32,
            order: 2,
            concentration: 0.02,
            context_coupling: 0.1,
            temperature: 0.9,
            drift_lambda: 0.05,
        }
    }
}

impl Default for DrafterSection {
    fn default() -> Self {
        Self {
            order: 1,
            smoothing_alpha: 0.1,
            count_cap: Some(4096),
            warmup_tokens: 50_000,
            ngram_n: 3,
            ngram_continuation: crate::drafter::DEFAULT_CONTINUATION_LEN,
            adapt: true,
            staleness_bound: Some(1),
        }
    }
}

/// Depth 10, top_k 8, one arm per verify width in {64, 48, 32, 16}.
pub fn default_strategies() -> Vec<SpecStrategy> {
    [64, 48, 32, 16]
        .iter()
        .map(|&verify| SpecStrategy::new(10, 8, verify).expect("valid default strategy"))
        .collect()
}

impl Default for TunerSection {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            window: DEFAULT_WINDOW,
            thresholds: vec![1, 2, 8, 16],
            strategies: default_strategies(),
        }
    }
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            elastic_threshold: DEFAULT_ELASTIC_THRESHOLD,
            mode: DecodeMode::GreedyTree,
            speculate: true,
        }
    }
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            mu: 3000f64.ln(),
            sigma: 1.0,
            max_len: 32768,
            requests: 128,
            responses_per_prompt: 8,
            prompt_len: 16,
        }
    }
}

impl Default for SpotSection {
    fn default() -> Self {
        Self {
            workers: 8,
            dp_groups: 2,
            idle_threshold: DEFAULT_IDLE_THRESHOLD,
            iteration_time: 100.0,
            retention: 1,
            train: SpotTrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("<toml {}..{}>", s.start, s.end))
                .unwrap_or_else(|| "<toml>".into());
            err(&path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn target_shape(&self) -> TargetShape {
        TargetShape {
            vocab: self.target.vocab,
            order: self.target.order,
            concentration: self.target.concentration,
            context_coupling: self.target.context_coupling,
        }
    }

    pub fn drafter_config(&self) -> DrafterConfig {
        DrafterConfig {
            vocab: self.target.vocab,
            order: self.drafter.order,
            smoothing_alpha: self.drafter.smoothing_alpha,
            count_cap: self.drafter.count_cap,
        }
    }

    pub fn workload_config(&self) -> WorkloadConfig {
        WorkloadConfig {
            lengths: LengthDistribution {
                mu: self.workload.mu,
                sigma: self.workload.sigma,
                max_len: self.workload.max_len,
            },
            requests: self.workload.requests,
            responses_per_prompt: self.workload.responses_per_prompt,
            prompt_len: self.workload.prompt_len,
        }
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        RolloutConfig {
            elastic_threshold: self.rollout.elastic_threshold,
            mode: self.rollout.mode,
            staleness_bound: if self.drafter.adapt {
                self.drafter.staleness_bound
            } else {
                None
            },
        }
    }

    pub fn tuner(&self) -> Result<BegMab, ConfigError> {
        BegMab::new(
            self.tuner.strategies.clone(),
            self.tuner.thresholds.clone(),
            self.tuner.epsilon,
            self.tuner.window,
        )
        .map_err(|e| err("tuner", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.target;
        if t.vocab < 2 {
            return Err(err("target.vocab", "must be at least 2"));
        }
        if crate::context::ContextCodec::new(t.vocab, t.order).is_none() {
            return Err(err("target.order", "context key space overflows"));
        }
        if !(t.concentration > 0.0 && t.concentration.is_finite()) {
            return Err(err("target.concentration", "must be positive"));
        }
        if !(0.0..=1.0).contains(&t.context_coupling) {
            return Err(err("target.context_coupling", "must lie in [0, 1]"));
        }
        if !(t.temperature >= 0.0 && t.temperature.is_finite()) {
            return Err(err("target.temperature", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&t.drift_lambda) {
            return Err(err("target.drift_lambda", "must lie in [0, 1]"));
        }
        let d = &self.drafter;
        if d.order > t.order {
            return Err(err("drafter.order", "must not exceed target.order"));
        }
        if !(d.smoothing_alpha >= 0.0 && d.smoothing_alpha.is_finite()) {
            return Err(err("drafter.smoothing_alpha", "must be finite and >= 0"));
        }
        if d.count_cap == Some(0) {
            return Err(err("drafter.count_cap", "must be at least 1"));
        }
        if d.ngram_n == 0 {
            return Err(err("drafter.ngram_n", "must be at least 1"));
        }
        if d.ngram_continuation == 0 {
            return Err(err("drafter.ngram_continuation", "must be at least 1"));
        }
        if self.tuner.strategies.is_empty() {
            return Err(err("tuner.strategies", "must not be empty"));
        }
        self.tuner()?;
        if self.rollout.elastic_threshold == 0 {
            return Err(err("rollout.elastic_threshold", "must be at least 1"));
        }
        self.cost.validate().map_err(|m| err("cost", m))?;
        let w = &self.workload;
        LengthDistribution {
            mu: w.mu,
            sigma: w.sigma,
            max_len: w.max_len,
        }
        .validate()
        .map_err(|m| err("workload", m))?;
        if w.requests == 0 {
            return Err(err("workload.requests", "must be at least 1"));
        }
        if w.responses_per_prompt == 0 {
            return Err(err("workload.responses_per_prompt", "must be at least 1"));
        }
        let s = &self.spot;
        if s.workers == 0 {
            return Err(err("spot.workers", "must be at least 1"));
        }
        if s.dp_groups == 0 || s.dp_groups > s.workers {
            return Err(err("spot.dp_groups", "must lie in [1, workers]"));
        }
        if s.idle_threshold == 0 {
            return Err(err("spot.idle_threshold", "must be at least 1"));
        }
        if !(s.iteration_time > 0.0 && s.iteration_time.is_finite()) {
            return Err(err("spot.iteration_time", "must be positive"));
        }
        if s.train.token_budget == 0 {
            return Err(err("spot.train.token_budget", "must be at least 1"));
        }
        if s.train.pack_capacity == 0 {
            return Err(err("spot.train.pack_capacity", "must be at least 1"));
        }
        Ok(())
    }
}

/// `Option<u64>` written as an integer or the string `"none"`, so that an
/// explicit `None` survives formats that drop null fields.
mod optional_limit {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(u64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => Repr::Value(*n),
            None => Repr::Word("none".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(n) => Ok(Some(n)),
            Repr::Word(w) if w == "none" => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected an integer or \"none\", got \"{w}\""
            ))),
        }
    }
}
