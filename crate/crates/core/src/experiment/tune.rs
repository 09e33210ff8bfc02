use serde::{Deserialize, Serialize};

use super::config::ConfigError;
use super::run::strategy_label;
use crate::mab::{BegMab, MabStateDump, DEFAULT_EPSILON, DEFAULT_WINDOW};
use crate::rng::RngStream;
use crate::spec::SpecStrategy;

/// A stationary or swapping synthetic environment for the bandit alone.
/// Every arm shares one bucket; arm `i` pays `levels[i]` scaled by a uniform
/// factor in `[1 - noise, 1 + noise]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub seed: u64,
    pub epsilon: f64,
    pub window: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub levels: Vec<f64>,
    pub noise: f64,
    /// Round at which the best arm drops to the lowest level and every other
    /// arm moves up one rank.
    pub swap_at: Option<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epsilon: DEFAULT_EPSILON,
            window: DEFAULT_WINDOW,
            rounds: 2000,
            batch_size: 4,
            levels: vec![1.0, 0.8, 0.7, 0.6],
            noise: 0.05,
            swap_at: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneRound {
    pub round: usize,
    pub arm: usize,
    pub strategy: String,
    pub reward: f64,
    pub best_arm: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub rounds: usize,
    pub warmup: usize,
    /// Share of best-arm picks after warmup and before any swap.
    pub share_after_warmup: f64,
    /// Rounds after the swap until the last `w` picks first hold at least
    /// 80% best-arm picks.
    pub rounds_to_recover: Option<usize>,
    /// Share of best-arm picks from `5w` rounds past the swap to the end.
    pub share_after_swap: Option<f64>,
    pub explorations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub summary: TuneSummary,
    pub rounds: Vec<TuneRound>,
    pub state: Option<MabStateDump>,
}

/// Arm `i` is depth `i + 1`, top_k 2, verifying 2 tokens, so all arms share
/// one group.
pub fn tune_arms(n: usize) -> Vec<SpecStrategy> {
    (1..=n)
        .map(|d| SpecStrategy::new(d, 2, 2).expect("valid arm"))
        .collect()
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: &str, message: &str| Err(ConfigError::new(path, message));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return err("epsilon", "must lie in [0, 1]");
        }
        if self.window == 0 {
            return err("window", "must be at least 1");
        }
        if self.rounds == 0 {
            return err("rounds", "must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1");
        }
        if self.levels.is_empty() {
            return err("levels", "needs at least one arm");
        }
        if self.levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return err("levels", "every level must be positive");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return err("noise", "must lie in [0, 1)");
        }
        if let Some(at) = self.swap_at {
            if self.levels.len() < 2 {
                return err("swap_at", "needs at least two arms");
            }
            if at >= self.rounds {
                return err("swap_at", "must fall before the last round");
            }
        }
        Ok(())
    }
}

pub const RECOVERED_SHARE: f64 = 0.8;

fn best(levels: &[f64]) -> usize {
    let mut b = 0;
    for (i, &l) in levels.iter().enumerate() {
        if l > levels[b] {
            b = i;
        }
    }
    b
}

fn share(rounds: &[TuneRound]) -> f64 {
    if rounds.is_empty() {
        return 0.0;
    }
    rounds.iter().filter(|r| r.arm == r.best_arm).count() as f64 / rounds.len() as f64
}

/// Plays `rounds` select/record cycles. Rewards enter through the normal
/// record path with zero accepted tokens, so `reward = batch / elapsed`.
pub fn run_tune(cfg: &TuneConfig) -> Result<TuneReport, ConfigError> {
    cfg.validate()?;
    let arms = tune_arms(cfg.levels.len());
    let mut mab = BegMab::new(arms.clone(), vec![1], cfg.epsilon, cfg.window)
        .map_err(|e| ConfigError::new("levels", &e.to_string()))?;
    let root = RngStream::new(cfg.seed, 0);
    let mut select_rng = root.substream(1);
    let mut reward_rng = root.substream(2);
    let mut levels = cfg.levels.clone();
    let zeros = vec![0usize; cfg.batch_size];
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        if Some(round) == cfg.swap_at {
            let mut ranked: Vec<usize> = (0..levels.len()).collect();
            ranked.sort_by(|&a, &b| levels[b].total_cmp(&levels[a]).then(a.cmp(&b)));
            let old = levels.clone();
            levels[ranked[0]] = old[ranked[ranked.len() - 1]];
            for j in 1..ranked.len() {
                levels[ranked[j]] = old[ranked[j - 1]];
            }
        }
        let s = mab
            .select(cfg.batch_size, &mut select_rng)
            .expect("single bucket from 1");
        let arm = arms.iter().position(|a| *a == s).expect("own arm");
        let factor = 1.0 + cfg.noise * (2.0 * reward_rng.uniform() - 1.0);
        let elapsed = cfg.batch_size as f64 / (levels[arm] * factor);
        let sample = mab
            .record(&s, elapsed, &zeros, cfg.batch_size)
            .expect("valid record");
        rounds.push(TuneRound {
            round,
            arm,
            strategy: strategy_label(&s),
            reward: sample.reward,
            best_arm: best(&levels),
        });
    }
    let warmup = (5 * cfg.window).min(cfg.rounds);
    let stationary_end = cfg.swap_at.unwrap_or(cfg.rounds).max(warmup);
    let rounds_to_recover = cfg.swap_at.and_then(|at| {
        (at + cfg.window..=cfg.rounds)
            .find(|&end| share(&rounds[end - cfg.window..end]) >= RECOVERED_SHARE)
            .map(|end| end - at)
    });
    let share_after_swap = cfg
        .swap_at
        .map(|at| share(&rounds[(at + 5 * cfg.window).min(cfg.rounds)..]));
    let state = mab.dump();
    Ok(TuneReport {
        summary: TuneSummary {
            rounds: cfg.rounds,
            warmup,
            share_after_warmup: share(&rounds[warmup..stationary_end]),
            rounds_to_recover,
            share_after_swap,
            explorations: state.explorations,
        },
        rounds,
        state: Some(state),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arms_share_one_group() {
        let mab = BegMab::new(tune_arms(4), vec![1], 0.1, 20).unwrap();
        assert_eq!(mab.group(0).len(), 4);
    }

    #[test]
    fn rewards_follow_levels() {
        let cfg = TuneConfig {
            noise: 0.0,
            rounds: 50,
            ..TuneConfig::default()
        };
        let r = run_tune(&cfg).unwrap();
        for round in &r.rounds {
            assert!((round.reward - cfg.levels[round.arm]).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_demotes_the_leader() {
        let cfg = TuneConfig {
            swap_at: Some(10),
            rounds: 20,
            noise: 0.0,
            ..TuneConfig::default()
        };
        let r = run_tune(&cfg).unwrap();
        assert_eq!(r.rounds[9].best_arm, 0);
        assert_eq!(r.rounds[10].best_arm, 1);
        // levels become [0.6, 1.0, 0.8, 0.7]
        let paid: Vec<_> = r.rounds[10..].iter().map(|x| (x.arm, x.reward)).collect();
        for (arm, reward) in paid {
            let want = [0.6, 1.0, 0.8, 0.7][arm];
            assert!((reward - want).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_names_fields() {
        let bad = TuneConfig {
            swap_at: Some(5000),
            ..TuneConfig::default()
        };
        assert_eq!(run_tune(&bad).unwrap_err().path, "swap_at");
        let bad = TuneConfig {
            epsilon: 2.0,
            ..TuneConfig::default()
        };
        assert_eq!(run_tune(&bad).unwrap_err().path, "epsilon");
    }
}
