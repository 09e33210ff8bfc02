use serde::{Deserialize, Serialize};

use super::config::{default_strategies, ConfigError};
use super::run::strategy_label;
use crate::drafter::{AdaptiveDrafter, DrafterConfig, NgramIndex};
use crate::rng::{mix_labels, RngStream};
use crate::spec::{spec_generate, DecodeMode, DraftSource, SpecStrategy};
use crate::spot::pack_sequences;
use crate::target::{generate_autoregressive, MarkovTargetModel, TargetShape};
use crate::token::{Distribution, TokenId};

/// Losslessness suites: token equality against plain decoding on random
/// models, and per-position marginals of stochastic verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub cases: usize,
    pub max_vocab: usize,
    pub max_order: usize,
    pub length: usize,
    pub temperature: f64,
    pub strategies: Vec<SpecStrategy>,
    pub samples: usize,
    pub sample_vocab: usize,
    pub positions: usize,
    pub sample_depth: usize,
    pub max_tv: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            cases: 50,
            max_vocab: 16,
            max_order: 3,
            length: 200,
            temperature: 0.0,
            strategies: default_strategies(),
            samples: 100_000,
            sample_vocab: 8,
            positions: 5,
            sample_depth: 3,
            max_tv: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyCase {
    pub case: usize,
    pub vocab: usize,
    pub order: usize,
    pub eos: bool,
    pub mode: String,
    pub source: String,
    pub strategy: String,
    pub tokens: usize,
    pub identical: bool,
    pub first_mismatch: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionTv {
    pub position: usize,
    pub tv: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub temperature: f64,
    pub cases: Vec<VerifyCase>,
    pub mismatches: usize,
    pub sampled: Vec<PositionTv>,
    pub max_tv: f64,
    pub passed: bool,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: &str, message: &str| Err(ConfigError::new(path, message));
        if self.max_vocab < 2 {
            return err("max_vocab", "must be at least 2");
        }
        if self.length == 0 {
            return err("length", "must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return err("temperature", "must be finite and non-negative");
        }
        if self.strategies.is_empty() {
            return err("strategies", "needs at least one strategy");
        }
        if self.sample_vocab < 2 {
            return err("sample_vocab", "must be at least 2");
        }
        if self.samples > 0 && (self.positions == 0 || self.sample_depth == 0) {
            return err("positions", "positions and sample_depth must be at least 1");
        }
        Ok(())
    }
}

fn first_mismatch(a: &[TokenId], b: &[TokenId]) -> Option<usize> {
    a.iter()
        .zip(b)
        .position(|(x, y)| x != y)
        .or((a.len() != b.len()).then(|| a.len().min(b.len())))
}

/// Speculative output compared token by token with plain decoding from the
/// same stream, for random targets, both draft sources and every strategy.
/// Linear stochastic verification is included only at temperature 0, where
/// it too must reproduce the argmax chain exactly.
pub fn greedy_suite(cfg: &VerifyConfig) -> Vec<VerifyCase> {
    let root = RngStream::new(cfg.seed, 0);
    let mut out = Vec::new();
    for case in 0..cfg.cases {
        let mut rng = root.substream(mix_labels(1, case as u64));
        let vocab = 2 + rng.below(cfg.max_vocab - 1);
        let order = rng.below(cfg.max_order + 1);
        let concentration = [0.1, 0.5, 1.0][rng.below(3)];
        let shape = TargetShape {
            vocab,
            order,
            concentration,
            context_coupling: 0.3,
        };
        let base = MarkovTargetModel::random(shape, &mut rng).expect("small random shape");
        let eos = case % 3 == 2;
        let base = base
            .with_eos(eos.then_some(TokenId(0)))
            .expect("token 0 is in range");
        let target = base
            .clone()
            .with_temperature(cfg.temperature)
            .expect("validated temperature");

        let mut drafter = AdaptiveDrafter::new(DrafterConfig {
            vocab,
            order: order.saturating_sub(1),
            smoothing_alpha: 0.5,
            count_cap: None,
        })
        .expect("order below vocab limits");
        let mut ngram = NgramIndex::new(2, 8);
        let warm: Vec<Vec<TokenId>> = (0..20)
            .map(|i| generate_autoregressive(&base, &[], 100, &mut rng.substream(i)))
            .collect();
        drafter.train_on_batch(&pack_sequences(&warm, 2000));
        for w in &warm {
            ngram.insert(w, 0);
        }
        let prompt: Vec<TokenId> = (0..rng.below(4))
            .map(|_| TokenId(rng.below(vocab) as u32))
            .collect();
        let stream = rng.substream(99);
        let plain = generate_autoregressive(&target, &prompt, cfg.length, &mut stream.clone());

        let mut modes = vec![DecodeMode::GreedyTree];
        if cfg.temperature == 0.0 {
            modes.push(DecodeMode::StochasticLinear);
        }
        for mode in modes {
            for (name, source) in [
                ("adaptive", DraftSource::Model(&drafter)),
                ("ngram", DraftSource::Ngram(&ngram)),
            ] {
                for s in &cfg.strategies {
                    let spec = spec_generate(
                        &target,
                        source,
                        &prompt,
                        cfg.length,
                        s,
                        mode,
                        &mut stream.clone(),
                    );
                    let mismatch = first_mismatch(&spec.tokens, &plain);
                    out.push(VerifyCase {
                        case,
                        vocab,
                        order,
                        eos,
                        mode: match mode {
                            DecodeMode::GreedyTree => "greedy-tree",
                            DecodeMode::StochasticLinear => "stochastic-linear",
                        }
                        .into(),
                        source: name.into(),
                        strategy: strategy_label(s),
                        tokens: plain.len(),
                        identical: mismatch.is_none(),
                        first_mismatch: mismatch,
                    });
                }
            }
        }
    }
    out
}

/// Order-0 target and drafter with different random rows; total variation
/// between the empirical marginal at each of the first `positions` outputs
/// and the target row.
pub fn sampled_suite(cfg: &VerifyConfig) -> Vec<PositionTv> {
    if cfg.samples == 0 {
        return Vec::new();
    }
    let root = RngStream::new(cfg.seed, 1);
    let v = cfg.sample_vocab;
    let p = Distribution::dirichlet(v, 1.0, &mut root.substream(1));
    let q = Distribution::dirichlet(v, 1.0, &mut root.substream(2));
    let target =
        MarkovTargetModel::from_rows(v, 0, [(Vec::new(), p.clone())]).expect("order-0 row");
    let drafter = MarkovTargetModel::from_rows(v, 0, [(Vec::new(), q)]).expect("order-0 row");
    let strategy = SpecStrategy::chain(cfg.sample_depth);
    let mut counts = vec![vec![0u64; v]; cfg.positions];
    for i in 0..cfg.samples {
        let out = spec_generate(
            &target,
            DraftSource::Model(&drafter),
            &[],
            cfg.positions,
            &strategy,
            DecodeMode::StochasticLinear,
            &mut root.substream(mix_labels(3, i as u64)),
        );
        for (pos, t) in out.tokens.iter().enumerate() {
            counts[pos][t.index()] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(position, c)| {
            let n = cfg.samples as f64;
            let tv = 0.5
                * c.iter()
                    .zip(p.probs())
                    .map(|(&k, &pk)| (k as f64 / n - pk).abs())
                    .sum::<f64>();
            PositionTv { position, tv }
        })
        .collect()
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport, ConfigError> {
    cfg.validate()?;
    let cases = greedy_suite(cfg);
    let sampled = sampled_suite(cfg);
    let mismatches = cases.iter().filter(|c| !c.identical).count();
    let max_tv = sampled.iter().map(|s| s.tv).fold(0.0, f64::max);
    Ok(VerifyReport {
        temperature: cfg.temperature,
        passed: mismatches == 0 && max_tv < cfg.max_tv,
        cases,
        mismatches,
        sampled,
        max_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_at_any_temperature() {
        for temperature in [0.0, 0.7] {
            let cfg = VerifyConfig {
                cases: 6,
                length: 60,
                samples: 0,
                temperature,
                ..VerifyConfig::default()
            };
            let r = run_verify(&cfg).unwrap();
            assert!(r.passed, "{:?}", r.cases.iter().find(|c| !c.identical));
            assert!(r.cases.len() >= 6 * 2 * 4);
        }
    }

    #[test]
    fn mismatch_position() {
        let a = crate::token::tokens(&[1, 2, 3]);
        let b = crate::token::tokens(&[1, 2]);
        assert_eq!(first_mismatch(&a, &a), None);
        assert_eq!(first_mismatch(&a, &b), Some(2));
    }
}
