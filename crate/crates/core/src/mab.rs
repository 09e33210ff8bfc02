//! Bucketed epsilon-greedy bandit choosing a speculative strategy per batch.
//!
//! Strategies are grouped by `tokens_to_verify`, largest first. Group `i`
//! serves batch sizes in `[t_i, t_{i+1} - 1]`, the last group everything from
//! `t_m` up. Within a group the arm with the best median reward over the last
//! `w` records wins, except with probability `epsilon` where a uniform arm
//! is tried instead.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::spec::SpecStrategy;

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MabError {
    #[error("strategy set is empty")]
    NoStrategies,
    #[error("duplicate strategy {0:?}")]
    DuplicateStrategy(SpecStrategy),
    #[error("{groups} tokens_to_verify groups but {thresholds} thresholds")]
    ThresholdCount { groups: usize, thresholds: usize },
    #[error("thresholds must be strictly ascending and start at 1 or more")]
    ThresholdOrder,
    #[error("epsilon {0} outside [0, 1]")]
    Epsilon(f64),
    #[error("window must be at least 1")]
    Window,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(SpecStrategy),
    #[error("batch size {batch} is below the first threshold {first}")]
    BelowFirstThreshold { batch: usize, first: usize },
    #[error("bad record: {0}")]
    BadRecord(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    /// Emitted tokens per request, bonus included.
    pub mean_accept: f64,
    /// Emitted tokens per unit of simulated time.
    pub reward: f64,
}

/// Record formulas: `a = sum(accept) / batch + 1`, `r = a * batch / elapsed`.
pub fn reward_sample(
    elapsed: f64,
    accept_lens: &[usize],
    batch_size: usize,
) -> Result<RewardSample, MabError> {
    if batch_size == 0 {
        return Err(MabError::BadRecord("batch_size must be at least 1"));
    }
    if !(elapsed > 0.0 && elapsed.is_finite()) {
        return Err(MabError::BadRecord("elapsed time must be positive"));
    }
    if accept_lens.len() != batch_size {
        return Err(MabError::BadRecord("one accept length per request"));
    }
    let sum: usize = accept_lens.iter().sum();
    let mean_accept = sum as f64 / batch_size as f64 + 1.0;
    Ok(RewardSample {
        mean_accept,
        reward: mean_accept * batch_size as f64 / elapsed,
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BegMab {
    strategies: Vec<SpecStrategy>,
    /// Indices into `strategies`, one group per bucket.
    groups: Vec<Vec<usize>>,
    thresholds: Vec<usize>,
    epsilon: f64,
    window: usize,
    rewards: Vec<VecDeque<f64>>,
    accepts: Vec<VecDeque<f64>>,
    selections: Vec<u64>,
    explorations: u64,
}

impl BegMab {
    pub fn new(
        strategies: Vec<SpecStrategy>,
        thresholds: Vec<usize>,
        epsilon: f64,
        window: usize,
    ) -> Result<Self, MabError> {
        if strategies.is_empty() {
            return Err(MabError::NoStrategies);
        }
        for (i, s) in strategies.iter().enumerate() {
            if strategies[..i].contains(s) {
                return Err(MabError::DuplicateStrategy(*s));
            }
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(MabError::Epsilon(epsilon));
        }
        if window == 0 {
            return Err(MabError::Window);
        }
        let mut by_verify: BTreeMap<std::cmp::Reverse<usize>, Vec<usize>> = BTreeMap::new();
        for (i, s) in strategies.iter().enumerate() {
            by_verify
                .entry(std::cmp::Reverse(s.tokens_to_verify))
                .or_default()
                .push(i);
        }
        let groups: Vec<Vec<usize>> = by_verify.into_values().collect();
        if groups.len() != thresholds.len() {
            return Err(MabError::ThresholdCount {
                groups: groups.len(),
                thresholds: thresholds.len(),
            });
        }
        if thresholds[0] == 0 || thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MabError::ThresholdOrder);
        }
        let n = strategies.len();
        Ok(Self {
            strategies,
            groups,
            thresholds,
            epsilon,
            window,
            rewards: vec![VecDeque::with_capacity(window); n],
            accepts: vec![VecDeque::with_capacity(window); n],
            selections: vec![0; n],
            explorations: 0,
        })
    }

    pub fn strategies(&self) -> &[SpecStrategy] {
        &self.strategies
    }

    pub fn thresholds(&self) -> &[usize] {
        &self.thresholds
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `(low, high)` batch range of each bucket; `None` means unbounded.
    pub fn buckets(&self) -> Vec<(usize, Option<usize>)> {
        self.thresholds
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.thresholds.get(i + 1).map(|&n| n - 1)))
            .collect()
    }

    pub fn bucket_of(&self, batch_size: usize) -> Option<usize> {
        if batch_size < self.thresholds[0] {
            return None;
        }
        Some(self.thresholds.partition_point(|&t| t <= batch_size) - 1)
    }

    /// Strategies routed to `bucket`, in declaration order.
    pub fn group(&self, bucket: usize) -> Vec<SpecStrategy> {
        self.groups[bucket]
            .iter()
            .map(|&i| self.strategies[i])
            .collect()
    }

    fn index_of(&self, s: &SpecStrategy) -> Result<usize, MabError> {
        self.strategies
            .iter()
            .position(|x| x == s)
            .ok_or(MabError::UnknownStrategy(*s))
    }

    pub fn rewards(&self, s: &SpecStrategy) -> Result<&VecDeque<f64>, MabError> {
        Ok(&self.rewards[self.index_of(s)?])
    }

    pub fn accepts(&self, s: &SpecStrategy) -> Result<&VecDeque<f64>, MabError> {
        Ok(&self.accepts[self.index_of(s)?])
    }

    pub fn selections(&self, s: &SpecStrategy) -> Result<u64, MabError> {
        Ok(self.selections[self.index_of(s)?])
    }

    pub fn record(
        &mut self,
        strategy: &SpecStrategy,
        elapsed: f64,
        accept_lens: &[usize],
        batch_size: usize,
    ) -> Result<RewardSample, MabError> {
        let i = self.index_of(strategy)?;
        let sample = reward_sample(elapsed, accept_lens, batch_size)?;
        push_bounded(&mut self.rewards[i], sample.reward, self.window);
        push_bounded(&mut self.accepts[i], sample.mean_accept, self.window);
        Ok(sample)
    }

    pub fn select(
        &mut self,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<SpecStrategy, MabError> {
        let bucket = self
            .bucket_of(batch_size)
            .ok_or(MabError::BelowFirstThreshold {
                batch: batch_size,
                first: self.thresholds[0],
            })?;
        let group = &self.groups[bucket];
        let chosen = if group.len() == 1 {
            group[0]
        } else if rng.uniform() < self.epsilon {
            self.explorations += 1;
            group[rng.below(group.len())]
        } else {
            let mut best = group[0];
            let mut best_score = self.score(best);
            for &i in &group[1..] {
                let s = self.score(i);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            best
        };
        self.selections[chosen] += 1;
        Ok(self.strategies[chosen])
    }

    /// Median reward; an empty window outranks everything.
    fn score(&self, i: usize) -> f64 {
        median(self.rewards[i].iter().copied()).unwrap_or(f64::INFINITY)
    }

    pub fn dump(&self) -> MabStateDump {
        MabStateDump {
            epsilon: self.epsilon,
            window: self.window,
            buckets: self
                .buckets()
                .into_iter()
                .enumerate()
                .map(|(b, (low, high))| BucketDump {
                    low,
                    high,
                    strategies: self.groups[b]
                        .iter()
                        .map(|&i| ArmDump {
                            strategy: self.strategies[i],
                            selections: self.selections[i],
                            rewards: self.rewards[i].iter().copied().collect(),
                            accepts: self.accepts[i].iter().copied().collect(),
                            median_reward: median(self.rewards[i].iter().copied()),
                        })
                        .collect(),
                })
                .collect(),
            explorations: self.explorations,
        }
    }
}

fn push_bounded(q: &mut VecDeque<f64>, v: f64, w: usize) {
    if q.len() == w {
        q.pop_front();
    }
    q.push_back(v);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabStateDump {
    pub epsilon: f64,
    pub window: usize,
    pub buckets: Vec<BucketDump>,
    pub explorations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketDump {
    pub low: usize,
    pub high: Option<usize>,
    pub strategies: Vec<ArmDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDump {
    pub strategy: SpecStrategy,
    pub selections: u64,
    pub rewards: Vec<f64>,
    pub accepts: Vec<f64>,
    pub median_reward: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(depth: usize, verify: usize) -> SpecStrategy {
        SpecStrategy::new(depth, 8, verify).unwrap()
    }

    fn four_groups() -> BegMab {
        let strategies = vec![s(10, 16), s(10, 64), s(10, 32), s(10, 48)];
        BegMab::new(strategies, vec![1, 2, 8, 16], 0.1, 20).unwrap()
    }

    #[test]
    fn buckets_map_to_descending_groups() {
        let m = four_groups();
        assert_eq!(
            m.buckets(),
            vec![(1, Some(1)), (2, Some(7)), (8, Some(15)), (16, None)]
        );
        for (batch, verify) in [
            (1, 64),
            (2, 48),
            (7, 48),
            (8, 32),
            (15, 32),
            (16, 16),
            (500, 16),
        ] {
            let b = m.bucket_of(batch).unwrap();
            assert_eq!(m.group(b)[0].tokens_to_verify, verify, "batch {batch}");
        }
        assert_eq!(m.bucket_of(0), None);
    }

    #[test]
    fn single_group_covers_everything() {
        let m = BegMab::new(vec![s(10, 16)], vec![1], 0.1, 20).unwrap();
        assert_eq!(m.buckets(), vec![(1, None)]);
    }

    #[test]
    fn threshold_mismatch_is_rejected() {
        let err = BegMab::new(vec![s(10, 16), s(10, 32), s(10, 48)], vec![1, 8], 0.1, 20);
        assert_eq!(
            err.unwrap_err(),
            MabError::ThresholdCount {
                groups: 3,
                thresholds: 2
            }
        );
        assert_eq!(
            BegMab::new(vec![s(10, 16), s(10, 32)], vec![4, 4], 0.1, 20).unwrap_err(),
            MabError::ThresholdOrder
        );
    }

    #[test]
    fn record_formulas() {
        let r = reward_sample(2.0, &[3, 3, 3, 3], 4).unwrap();
        assert_eq!(
            r,
            RewardSample {
                mean_accept: 4.0,
                reward: 8.0
            }
        );
        let r = reward_sample(1.0, &[0, 0], 2).unwrap();
        assert_eq!(
            r,
            RewardSample {
                mean_accept: 1.0,
                reward: 2.0
            }
        );
        assert!(reward_sample(0.0, &[1], 1).is_err());
        assert!(reward_sample(1.0, &[1], 2).is_err());
    }

    #[test]
    fn window_evicts_oldest() {
        let mut m = BegMab::new(vec![s(10, 16)], vec![1], 0.1, 3).unwrap();
        for e in [1.0, 2.0, 4.0, 8.0] {
            m.record(&s(10, 16), e, &[0], 1).unwrap();
        }
        assert_eq!(
            m.rewards(&s(10, 16)).unwrap(),
            &VecDeque::from([0.5, 0.25, 0.125])
        );
        assert!(matches!(
            m.record(&s(3, 16), 1.0, &[0], 1),
            Err(MabError::UnknownStrategy(_))
        ));
    }

    #[test]
    fn single_candidate_skips_the_coin() {
        let mut m = BegMab::new(vec![s(10, 16), s(6, 64)], vec![1, 2], 1.0, 20).unwrap();
        let mut rng = RngStream::new(0, 0);
        let before = rng.clone();
        assert_eq!(m.select(1, &mut rng).unwrap(), s(6, 64));
        assert_eq!(rng.uniform(), before.clone().uniform());
    }

    #[test]
    fn exploit_picks_best_median() {
        let a = s(6, 32);
        let b = s(10, 32);
        let mut m = BegMab::new(vec![a, b], vec![1], 0.0, 20).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert_eq!(m.select(4, &mut rng).unwrap(), a);
        m.record(&a, 1.0, &[4], 1).unwrap();
        assert_eq!(m.select(4, &mut rng).unwrap(), b);
        m.record(&b, 1.0, &[6], 1).unwrap();
        assert_eq!(m.select(4, &mut rng).unwrap(), b);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median([]), None);
    }

    #[test]
    fn dump_serialises() {
        let mut m = four_groups();
        m.record(&s(10, 64), 2.0, &[3], 1).unwrap();
        let json = serde_json::to_string(&m.dump()).unwrap();
        let back: MabStateDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m.dump());
        assert_eq!(back.buckets[0].strategies[0].rewards, vec![2.0]);
    }
}
