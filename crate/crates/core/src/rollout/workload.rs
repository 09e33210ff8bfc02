use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::token::TokenId;

/// Log-normal response lengths, rounded and clamped to `[1, max_len]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub max_len: usize,
}

impl LengthDistribution {
    pub fn validate(&self) -> Result<(), String> {
        if !self.mu.is_finite() {
            return Err("mu must be finite".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err("sigma must be finite and non-negative".into());
        }
        if self.max_len == 0 {
            return Err("max_len must be at least 1".into());
        }
        Ok(())
    }

    /// Consumes one standard-normal draw.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let z: f64 = StandardNormal.sample(rng);
        let x = (self.mu + self.sigma * z).exp().round();
        if x >= self.max_len as f64 {
            self.max_len
        } else {
            (x as usize).max(1)
        }
    }
}

pub fn sample_response_length(dist: &LengthDistribution, rng: &mut RngStream) -> usize {
    dist.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestStatus {
    Running,
    Finished,
}

/// One response being generated. `rng` is the request's private stream, so
/// its tokens do not depend on how requests are batched.
#[derive(Debug, Clone)]
pub struct RolloutRequest {
    pub request_id: u64,
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    pub max_len: usize,
    pub status: RequestStatus,
    pub rng: RngStream,
}

impl RolloutRequest {
    pub fn new(request_id: u64, prompt: Vec<TokenId>, max_len: usize, rng: RngStream) -> Self {
        assert!(max_len >= 1, "max_len must be at least 1");
        Self {
            request_id,
            prompt,
            generated: Vec::new(),
            max_len,
            status: RequestStatus::Running,
            rng,
        }
    }

    pub fn remaining(&self) -> usize {
        self.max_len - self.generated.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub lengths: LengthDistribution,
    pub requests: usize,
    /// Responses sampled per prompt, as in group-based RL.
    pub responses_per_prompt: usize,
    pub prompt_len: usize,
}

/// Draws prompts and per-request length budgets. Every request gets the
/// substream `rng.substream(request_id)`.
pub fn generate_workload(
    config: &WorkloadConfig,
    vocab: usize,
    rng: &mut RngStream,
) -> Vec<RolloutRequest> {
    assert!(
        config.responses_per_prompt >= 1,
        "responses_per_prompt must be at least 1"
    );
    let mut prompt = Vec::new();
    (0..config.requests)
        .map(|i| {
            if i % config.responses_per_prompt == 0 {
                prompt = (0..config.prompt_len)
                    .map(|_| TokenId(rng.below(vocab) as u32))
                    .collect();
            }
            let max_len = config.lengths.sample(rng);
            RolloutRequest::new(i as u64, prompt.clone(), max_len, rng.substream(i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_degenerate() {
        let d = LengthDistribution {
            mu: 1000f64.ln(),
            sigma: 0.0,
            max_len: 32768,
        };
        let mut rng = RngStream::new(0, 0);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), 1000);
        }
    }

    #[test]
    fn lengths_stay_in_range() {
        let d = LengthDistribution {
            mu: 0.0,
            sigma: 3.0,
            max_len: 50,
        };
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let l = d.sample(&mut rng);
            assert!((1..=50).contains(&l));
        }
    }

    #[test]
    fn workload_groups_prompts() {
        let cfg = WorkloadConfig {
            lengths: LengthDistribution {
                mu: 3.0,
                sigma: 0.5,
                max_len: 100,
            },
            requests: 6,
            responses_per_prompt: 3,
            prompt_len: 4,
        };
        let reqs = generate_workload(&cfg, 10, &mut RngStream::new(2, 0));
        assert_eq!(reqs.len(), 6);
        assert_eq!(reqs[0].prompt, reqs[2].prompt);
        assert_ne!(reqs[0].rng.stream_id(), reqs[1].rng.stream_id());
    }
}
