use serde::{Deserialize, Serialize};

use super::cost::{should_enable_sd, step_latency, CostModelParams, DEFAULT_ELASTIC_THRESHOLD};
use super::workload::{RequestStatus, RolloutRequest};
use crate::drafter::{AdaptiveDrafter, NgramIndex};
use crate::mab::BegMab;
use crate::rng::RngStream;
use crate::spec::{speculative_step, DecodeMode, DraftSource, SpecStrategy};
use crate::target::MarkovTargetModel;
use crate::token::{sample_token, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    /// Speculate only while fewer than this many requests are running.
    pub elastic_threshold: usize,
    pub mode: DecodeMode,
    /// Maximum RL-step lag before the adaptive drafter is bypassed for the
    /// n-gram index. `None` never bypasses it.
    pub staleness_bound: Option<u64>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            elastic_threshold: DEFAULT_ELASTIC_THRESHOLD,
            mode: DecodeMode::GreedyTree,
            staleness_bound: Some(1),
        }
    }
}

/// A published adaptive drafter and the RL step whose data it last saw.
#[derive(Debug, Clone, Copy)]
pub struct DrafterSnapshot<'a> {
    pub drafter: &'a AdaptiveDrafter,
    pub trained_at_step: u64,
}

/// Draft sources available to one rollout. With neither present the engine
/// never speculates.
#[derive(Debug, Clone, Copy, Default)]
pub struct Drafters<'a> {
    pub adaptive: Option<DrafterSnapshot<'a>>,
    pub ngram: Option<&'a NgramIndex>,
    pub current_step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrafterKind {
    Adaptive,
    Ngram,
}

impl<'a> Drafters<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    fn pick(&self, bound: Option<u64>) -> Option<(DrafterKind, DraftSource<'a>)> {
        if let Some(snap) = self.adaptive {
            let lag = self.current_step.saturating_sub(snap.trained_at_step);
            if bound.is_none_or(|b| lag <= b) {
                return Some((DrafterKind::Adaptive, DraftSource::Model(snap.drafter)));
            }
        }
        self.ngram
            .map(|idx| (DrafterKind::Ngram, DraftSource::Ngram(idx)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    /// Simulated time at the end of the step.
    pub clock: f64,
    pub elapsed: f64,
    pub batch_size: usize,
    pub sd_active: bool,
    pub strategy: Option<SpecStrategy>,
    pub drafter: Option<DrafterKind>,
    /// Per-request accept lengths; empty for plain decode steps.
    pub accept_lens: Vec<usize>,
}

impl StepMetrics {
    pub fn mean_accept(&self) -> Option<f64> {
        (!self.accept_lens.is_empty())
            .then(|| self.accept_lens.iter().sum::<usize>() as f64 / self.accept_lens.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    /// Generated tokens per request, in input order.
    pub responses: Vec<Vec<TokenId>>,
    /// Simulated time at which each request finished.
    pub finish_times: Vec<f64>,
    pub trace: Vec<StepMetrics>,
    pub total_time: f64,
}

impl RolloutOutcome {
    pub fn generated_tokens(&self) -> usize {
        self.responses.iter().map(Vec::len).sum()
    }
}

/// Steps every running request until all finish. Each step either decodes
/// one token per request or, when the batch is under the elastic threshold
/// and a drafter and tuner are available, runs one speculative pass per
/// request with the tuner's strategy and feeds the result back.
///
/// Tokens come only from each request's own stream, so the responses do not
/// depend on whether or how the engine speculated in
/// [`DecodeMode::GreedyTree`].
pub fn run_rollout(
    mut requests: Vec<RolloutRequest>,
    target: &MarkovTargetModel,
    drafters: Drafters<'_>,
    mut mab: Option<&mut BegMab>,
    cost: &CostModelParams,
    config: &RolloutConfig,
    rng: &mut RngStream,
) -> RolloutOutcome {
    let mut finish_times = vec![0.0; requests.len()];
    let mut trace = Vec::new();
    let mut clock = 0.0;
    let mut seqs: Vec<Vec<TokenId>> = requests.iter().map(|r| r.prompt.clone()).collect();
    let mut active: Vec<usize> = (0..requests.len())
        .filter(|&i| requests[i].status == RequestStatus::Running)
        .collect();
    let source = drafters.pick(config.staleness_bound);
    let mut step = 0u64;
    while !active.is_empty() {
        let batch = active.len();
        let speculate = match (&mut mab, source) {
            (Some(m), Some((kind, src)))
                if should_enable_sd(batch, config.elastic_threshold)
                    && m.bucket_of(batch).is_some() =>
            {
                Some((m.select(batch, rng).expect("bucket checked"), kind, src))
            }
            _ => None,
        };
        let mut accept_lens = Vec::new();
        for &i in &active {
            let req = &mut requests[i];
            let seq = &mut seqs[i];
            match speculate {
                Some((strategy, _, src)) => {
                    let remaining = req.remaining();
                    let r = speculative_step(
                        target,
                        src,
                        seq,
                        &strategy,
                        config.mode,
                        &mut req.rng,
                        remaining,
                    );
                    accept_lens.push(r.accept_length());
                    seq.extend_from_slice(&r.accepted);
                    seq.push(r.bonus);
                    req.generated.extend_from_slice(&r.accepted);
                    req.generated.push(r.bonus);
                }
                None => {
                    let t = sample_token(target.target_next_dist(seq), &mut req.rng);
                    seq.push(t);
                    req.generated.push(t);
                }
            }
        }
        let strategy = speculate.map(|(s, _, _)| s);
        let elapsed = step_latency(cost, batch, strategy.as_ref());
        clock += elapsed;
        if let (Some(m), Some(s)) = (&mut mab, strategy) {
            m.record(&s, elapsed, &accept_lens, batch)
                .expect("known strategy");
        }
        active.retain(|&i| {
            let req = &mut requests[i];
            let done =
                req.generated.len() >= req.max_len || req.generated.last().copied() == target.eos();
            if done {
                req.status = RequestStatus::Finished;
                finish_times[i] = clock;
            }
            !done
        });
        trace.push(StepMetrics {
            step,
            clock,
            elapsed,
            batch_size: batch,
            sd_active: speculate.is_some(),
            strategy,
            drafter: speculate.map(|(_, k, _)| k),
            accept_lens,
        });
        step += 1;
    }
    RolloutOutcome {
        responses: requests.into_iter().map(|r| r.generated).collect(),
        finish_times,
        trace,
        total_time: clock,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::workload::{generate_workload, LengthDistribution, WorkloadConfig};
    use crate::target::{generate_autoregressive, TargetShape};

    fn target() -> MarkovTargetModel {
        let shape = TargetShape {
            vocab: 16,
            order: 2,
            concentration: 0.2,
            context_coupling: 0.3,
        };
        MarkovTargetModel::random(shape, &mut RngStream::new(11, 0))
            .unwrap()
            .with_temperature(0.9)
            .unwrap()
    }

    fn workload(n: usize) -> Vec<RolloutRequest> {
        let cfg = WorkloadConfig {
            lengths: LengthDistribution {
                mu: 60f64.ln(),
                sigma: 1.0,
                max_len: 600,
            },
            requests: n,
            responses_per_prompt: 4,
            prompt_len: 3,
        };
        generate_workload(&cfg, 16, &mut RngStream::new(5, 1))
    }

    fn mab() -> BegMab {
        let s = [32, 16]
            .iter()
            .map(|&t| SpecStrategy::new(6, 4, t).unwrap())
            .collect();
        BegMab::new(s, vec![1, 4], 0.1, 20).unwrap()
    }

    #[test]
    fn responses_match_plain_decoding() {
        let t = target();
        let reqs = workload(24);
        let plain: Vec<_> = reqs
            .iter()
            .map(|r| generate_autoregressive(&t, &r.prompt, r.max_len, &mut r.rng.clone()))
            .collect();
        let mut m = mab();
        let out = run_rollout(
            reqs,
            &t,
            Drafters {
                adaptive: None,
                ngram: None,
                current_step: 0,
            },
            Some(&mut m),
            &CostModelParams::default(),
            &RolloutConfig::default(),
            &mut RngStream::new(0, 0),
        );
        assert_eq!(out.responses, plain);
        assert!(out.trace.iter().all(|s| !s.sd_active));

        let reqs = workload(24);
        let snapshot = DrafterSnapshot {
            drafter: &crate::drafter::AdaptiveDrafter::new(crate::drafter::DrafterConfig {
                vocab: 16,
                order: 1,
                smoothing_alpha: 0.5,
                count_cap: None,
            })
            .unwrap(),
            trained_at_step: 0,
        };
        let sd = run_rollout(
            reqs,
            &t,
            Drafters {
                adaptive: Some(snapshot),
                ngram: None,
                current_step: 0,
            },
            Some(&mut m),
            &CostModelParams::default(),
            &RolloutConfig {
                elastic_threshold: 16,
                ..RolloutConfig::default()
            },
            &mut RngStream::new(0, 0),
        );
        assert_eq!(sd.responses, plain);
        assert!(sd.trace.iter().any(|s| s.sd_active));
        let sum: f64 = sd.trace.iter().map(|s| s.elapsed).sum();
        assert!((sum - sd.total_time).abs() < 1e-9 * sd.total_time);
    }

    #[test]
    fn stale_adaptive_drafter_falls_back() {
        let d = crate::drafter::AdaptiveDrafter::new(crate::drafter::DrafterConfig {
            vocab: 16,
            order: 1,
            smoothing_alpha: 1.0,
            count_cap: None,
        })
        .unwrap();
        let idx = NgramIndex::new(2, 8);
        let drafters = Drafters {
            adaptive: Some(DrafterSnapshot {
                drafter: &d,
                trained_at_step: 2,
            }),
            ngram: Some(&idx),
            current_step: 5,
        };
        assert_eq!(drafters.pick(Some(1)).unwrap().0, DrafterKind::Ngram);
        assert_eq!(drafters.pick(Some(3)).unwrap().0, DrafterKind::Adaptive);
        assert_eq!(drafters.pick(None).unwrap().0, DrafterKind::Adaptive);
    }

    #[test]
    fn unit_lengths_finish_in_one_step() {
        let mut reqs = workload(40);
        for r in &mut reqs {
            r.max_len = 1;
        }
        let out = run_rollout(
            reqs,
            &target(),
            Drafters::none(),
            None,
            &CostModelParams::default(),
            &RolloutConfig::default(),
            &mut RngStream::new(0, 0),
        );
        assert_eq!(out.trace.len(), 1);
        assert!(!out.trace[0].sd_active);
    }
}
