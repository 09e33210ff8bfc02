//! Token ids, probability rows, and inverse-CDF sampling.

use std::cmp::Ordering;
use std::fmt;

use rand_distr::{Distribution as _, Gamma};
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

/// Row-sum tolerance for a valid [`Distribution`].
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    /// Context padding sentinel. Never part of a vocabulary and never sampled.
    pub const BEGIN: TokenId = TokenId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_begin(self) -> bool {
        self == Self::BEGIN
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_begin() {
            f.write_str("<begin>")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

pub fn tokens(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().copied().map(TokenId).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("distribution is empty")]
    Empty,
    #[error("probability at index {index} is {value}, expected a finite non-negative value")]
    BadEntry { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    BadSum { sum: f64 },
}

/// Probability mass over a vocabulary, indexed by token id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DistributionError::BadEntry { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(DistributionError::BadSum { sum });
        }
        Ok(Self { probs })
    }

    /// Normalises non-negative weights. Falls back to uniform when all weights are zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, DistributionError> {
        if weights.is_empty() {
            return Err(DistributionError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DistributionError::BadEntry { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Ok(Self::uniform(weights.len()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { probs: weights })
    }

    pub fn uniform(vocab: usize) -> Self {
        assert!(vocab > 0);
        Self {
            probs: vec![1.0 / vocab as f64; vocab],
        }
    }

    pub fn one_hot(vocab: usize, token: TokenId) -> Self {
        assert!(token.index() < vocab);
        let mut probs = vec![0.0; vocab];
        probs[token.index()] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn vocab(&self) -> usize {
        self.probs.len()
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// `p_i^(1/temperature)` renormalised; temperature 0 is the argmax one-hot.
    pub fn tempered(&self, temperature: f64) -> Self {
        if temperature == 0.0 {
            return Self::one_hot(self.vocab(), self.argmax());
        }
        if temperature == 1.0 {
            return self.clone();
        }
        let inv = 1.0 / temperature;
        // Scale by the max first so large exponents cannot underflow the whole row.
        let max = self.probs.iter().cloned().fold(0.0, f64::max);
        let weights = self
            .probs
            .iter()
            .map(|&p| if p > 0.0 { (p / max).powf(inv) } else { 0.0 })
            .collect();
        Self::from_weights(weights).expect("tempering keeps weights valid")
    }

    /// Token at which the cumulative mass first exceeds `u`, scanning ascending ids.
    pub fn sample_with(&self, u: f64) -> TokenId {
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                cum += p;
                if u < cum {
                    return TokenId(i as u32);
                }
            }
        }
        // Rounding left the total slightly below u.
        TokenId(last_positive as u32)
    }

    /// The `k` most probable tokens with positive mass, highest first; ties by ascending id.
    pub fn top_k(&self, k: usize) -> Vec<(TokenId, f64)> {
        let mut ranked: Vec<(TokenId, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (TokenId(i as u32), p))
            .collect();
        let by_rank = |a: &(TokenId, f64), b: &(TokenId, f64)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        };
        if k == 0 {
            return Vec::new();
        }
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, by_rank);
            ranked.truncate(k);
        }
        ranked.sort_by(by_rank);
        ranked
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        assert_eq!(self.vocab(), other.vocab());
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &Distribution, weight: f64) -> Self {
        assert_eq!(self.vocab(), other.vocab());
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - weight) * a + weight * b)
            .collect();
        Self::from_weights(probs).expect("convex combination of valid rows")
    }

    /// Symmetric Dirichlet draw with the given concentration.
    pub fn dirichlet(vocab: usize, concentration: f64, rng: &mut RngStream) -> Self {
        assert!(vocab > 0 && concentration > 0.0);
        let gamma = Gamma::new(concentration, 1.0).expect("positive shape");
        loop {
            let weights: Vec<f64> = (0..vocab).map(|_| gamma.sample(rng)).collect();
            if weights.iter().sum::<f64>() > 0.0 {
                return Self::from_weights(weights).expect("gamma draws are non-negative");
            }
        }
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = DistributionError;

    fn try_from(probs: Vec<f64>) -> Result<Self, Self::Error> {
        Distribution::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Draws one token by inverse CDF over ascending token ids. Consumes exactly one uniform.
pub fn sample_token(dist: &Distribution, rng: &mut RngStream) -> TokenId {
    dist.sample_with(rng.uniform())
}
