use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::ContextCodec;
use crate::target::{ModelError, NextTokenModel};
use crate::token::{Distribution, TokenId};

/// Shape and hyperparameters of an [`AdaptiveDrafter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrafterConfig {
    pub vocab: usize,
    pub order: usize,
    pub smoothing_alpha: f64,
    /// When a row's total count exceeds this, every count in the row is
    /// halved. `None` keeps counting forever.
    pub count_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CountRow {
    pub(crate) counts: Vec<u64>,
    pub(crate) total: u64,
}

/// Order-m count table with Laplace smoothing. One call to
/// [`train_on_batch`](AdaptiveDrafter::train_on_batch) is one training
/// iteration and bumps `version`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDrafter {
    pub(crate) config: DrafterConfig,
    pub(crate) codec: ContextCodec,
    pub(crate) version: u64,
    pub(crate) rows: BTreeMap<u64, CountRow>,
}

impl AdaptiveDrafter {
    pub fn new(config: DrafterConfig) -> Result<Self, ModelError> {
        if config.vocab == 0 {
            return Err(ModelError::EmptyVocab);
        }
        let codec =
            ContextCodec::new(config.vocab, config.order).ok_or(ModelError::OrderTooLarge {
                vocab: config.vocab,
                order: config.order,
            })?;
        assert!(
            config.smoothing_alpha >= 0.0 && config.smoothing_alpha.is_finite(),
            "smoothing_alpha must be finite and non-negative"
        );
        Ok(Self {
            config,
            codec,
            version: 0,
            rows: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &DrafterConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of contexts with at least one observation.
    pub fn context_count(&self) -> usize {
        self.rows.len()
    }

    pub fn count(&self, ctx: &[TokenId], next: TokenId) -> u64 {
        self.rows
            .get(&self.codec.key(ctx))
            .map(|r| r.counts[next.index()])
            .unwrap_or(0)
    }

    /// `(count + alpha) / (total + alpha * V)` over the last `order` tokens.
    pub fn drafter_next_dist(&self, ctx: &[TokenId]) -> Distribution {
        let v = self.config.vocab;
        let alpha = self.config.smoothing_alpha;
        match self.rows.get(&self.codec.key(ctx)) {
            Some(row) if row.total > 0 || alpha > 0.0 => {
                let denom = row.total as f64 + alpha * v as f64;
                Distribution::from_weights(
                    row.counts
                        .iter()
                        .map(|&c| (c as f64 + alpha) / denom)
                        .collect(),
                )
                .expect("smoothed counts are non-negative")
            }
            _ => Distribution::uniform(v),
        }
    }

    /// Most likely next token, ties to the lowest id.
    pub fn argmax(&self, ctx: &[TokenId]) -> TokenId {
        match self.rows.get(&self.codec.key(ctx)) {
            Some(row) => {
                let mut best = 0;
                for (i, &c) in row.counts.iter().enumerate().skip(1) {
                    if c > row.counts[best] {
                        best = i;
                    }
                }
                TokenId(best as u32)
            }
            None => TokenId(0),
        }
    }

    /// Counts every `(context -> next)` transition of each member sequence.
    /// Contexts never reach across a member boundary: each member is read as
    /// if it started a fresh, BEGIN-padded stream.
    pub fn train_on_batch(&mut self, batch: &crate::spot::PackedBatch) {
        for member in batch.members() {
            self.observe_sequence(member);
        }
        self.version += 1;
    }

    /// Counts the transitions of one sequence without bumping the version.
    pub fn observe_sequence(&mut self, seq: &[TokenId]) {
        for i in 0..seq.len() {
            self.observe(&seq[..i], seq[i]);
        }
    }

    fn observe(&mut self, ctx: &[TokenId], next: TokenId) {
        let v = self.config.vocab;
        let key = self.codec.key(ctx);
        let row = self.rows.entry(key).or_insert_with(|| CountRow {
            counts: vec![0; v],
            total: 0,
        });
        row.counts[next.index()] += 1;
        row.total += 1;
        if let Some(cap) = self.config.count_cap {
            if row.total > cap {
                row.counts.iter_mut().for_each(|c| *c >>= 1);
                row.total = row.counts.iter().sum();
            }
        }
    }
}

impl NextTokenModel for AdaptiveDrafter {
    fn vocab(&self) -> usize {
        self.config.vocab
    }

    fn order(&self) -> usize {
        self.config.order
    }

    fn next_dist(&self, ctx: &[TokenId]) -> Cow<'_, Distribution> {
        Cow::Owned(self.drafter_next_dist(ctx))
    }
}
