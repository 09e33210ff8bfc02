//! Token sequences retained across RL steps for drafter training.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::token::TokenId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBufferEntry {
    pub id: u64,
    pub step_id: u64,
    pub sequence: Vec<TokenId>,
}

impl DataBufferEntry {
    pub fn length(&self) -> usize {
        self.sequence.len()
    }
}

/// Keeps the current step plus `retention` prior steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBuffer {
    retention: u64,
    current_step: u64,
    next_id: u64,
    entries: Vec<DataBufferEntry>,
}

pub const DEFAULT_RETENTION: u64 = 1;

impl Default for DataBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION)
    }
}

impl DataBuffer {
    pub fn new(retention: u64) -> Self {
        Self {
            retention,
            current_step: 0,
            next_id: 0,
            entries: Vec::new(),
        }
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn entries(&self) -> &[DataBufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&DataBufferEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Moves the clock forward and evicts entries older than
    /// `step - retention`. Never moves backwards.
    pub fn advance(&mut self, step: u64) {
        self.current_step = self.current_step.max(step);
        let oldest = self.current_step.saturating_sub(self.retention);
        self.entries.retain(|e| e.step_id >= oldest);
    }

    /// Appends one entry per sequence, duplicates included.
    pub fn insert<I>(&mut self, step_id: u64, sequences: I)
    where
        I: IntoIterator<Item = Vec<TokenId>>,
    {
        self.advance(step_id);
        for sequence in sequences {
            self.entries.push(DataBufferEntry {
                id: self.next_id,
                step_id,
                sequence,
            });
            self.next_id += 1;
        }
    }

    /// Sequences chosen by [`sample_ids`](Self::sample_ids).
    pub fn sample(&self, current_step: u64, token_budget: usize) -> Vec<&[TokenId]> {
        self.sample_excluding(current_step, token_budget, &BTreeSet::new())
            .into_iter()
            .map(|id| self.get(id).expect("sampled id exists").sequence.as_slice())
            .collect()
    }

    pub fn sample_ids(&self, current_step: u64, token_budget: usize) -> Vec<u64> {
        self.sample_excluding(current_step, token_budget, &BTreeSet::new())
    }

    /// Fills `token_budget` greedily: previous-step entries longest first,
    /// then current-step entries longest first, then anything older. Stops at
    /// the first entry that would overflow. Entries in `skip` are passed over.
    pub fn sample_excluding(
        &self,
        current_step: u64,
        token_budget: usize,
        skip: &BTreeSet<u64>,
    ) -> Vec<u64> {
        assert!(token_budget >= 1, "token budget must be at least 1");
        let tier = |step: u64| -> u64 {
            if current_step >= 1 && step == current_step - 1 {
                0
            } else if step == current_step {
                1
            } else {
                2
            }
        };
        let mut order: Vec<&DataBufferEntry> = self
            .entries
            .iter()
            .filter(|e| !skip.contains(&e.id) && e.step_id <= current_step)
            .collect();
        order.sort_by(|a, b| {
            tier(a.step_id)
                .cmp(&tier(b.step_id))
                .then(b.step_id.cmp(&a.step_id))
                .then(b.length().cmp(&a.length()))
                .then(a.id.cmp(&b.id))
        });
        let mut used = 0usize;
        let mut picked = Vec::new();
        for e in order {
            if used + e.length() > token_budget {
                break;
            }
            used += e.length();
            picked.push(e.id);
        }
        picked
    }
}
