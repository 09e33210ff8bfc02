//! Model-free drafting from continuations seen in earlier responses.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::token::TokenId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramEntry {
    pub continuation: Vec<TokenId>,
    pub frequency: u64,
    pub last_step_id: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Slot {
    entries: Vec<NgramEntry>,
    lookup: HashMap<Vec<TokenId>, usize>,
    best: usize,
}

fn ranks_before(a: &NgramEntry, b: &NgramEntry) -> bool {
    b.frequency
        .cmp(&a.frequency)
        .then(b.last_step_id.cmp(&a.last_step_id))
        .then(a.continuation.cmp(&b.continuation))
        .is_lt()
}

/// Maps each n-token key to the continuations that followed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramIndex {
    n: usize,
    continuation_len: usize,
    map: BTreeMap<Vec<TokenId>, Slot>,
}

pub const DEFAULT_CONTINUATION_LEN: usize = 8;

impl NgramIndex {
    pub fn new(n: usize, continuation_len: usize) -> Self {
        assert!(n >= 1 && continuation_len >= 1);
        Self {
            n,
            continuation_len,
            map: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn key_count(&self) -> usize {
        self.map.len()
    }

    pub fn entry_count(&self) -> usize {
        self.map.values().map(|s| s.entries.len()).sum()
    }

    /// Entries for `key` in first-seen order.
    pub fn entries(&self, key: &[TokenId]) -> &[NgramEntry] {
        self.map
            .get(key)
            .map(|s| s.entries.as_slice())
            .unwrap_or(&[])
    }

    /// Records, for every n-gram in `response`, the tokens that follow it
    /// (up to `continuation_len`). Responses of `n` tokens or fewer are ignored.
    pub fn insert(&mut self, response: &[TokenId], step_id: u64) {
        if response.len() <= self.n {
            return;
        }
        for start in 0..response.len() - self.n {
            let key_end = start + self.n;
            let cont_end = (key_end + self.continuation_len).min(response.len());
            let key = &response[start..key_end];
            let continuation = &response[key_end..cont_end];
            let slot = match self.map.get_mut(key) {
                Some(s) => s,
                None => self.map.entry(key.to_vec()).or_default(),
            };
            let i = match slot.lookup.get(continuation) {
                Some(&i) => {
                    let e = &mut slot.entries[i];
                    e.frequency += 1;
                    e.last_step_id = e.last_step_id.max(step_id);
                    i
                }
                None => {
                    slot.entries.push(NgramEntry {
                        continuation: continuation.to_vec(),
                        frequency: 1,
                        last_step_id: step_id,
                    });
                    let i = slot.entries.len() - 1;
                    slot.lookup.insert(continuation.to_vec(), i);
                    i
                }
            };
            if i != slot.best && ranks_before(&slot.entries[i], &slot.entries[slot.best]) {
                slot.best = i;
            }
        }
    }

    /// Best stored continuation for the last `n` tokens of `ctx`, truncated to
    /// `depth`. Ranked by frequency, then recency, then lexicographic order.
    pub fn draft(&self, ctx: &[TokenId], depth: usize) -> Vec<TokenId> {
        assert!(depth >= 1, "draft depth must be at least 1");
        if ctx.len() < self.n {
            return Vec::new();
        }
        let key = &ctx[ctx.len() - self.n..];
        match self.map.get(key) {
            Some(slot) => slot.entries[slot.best]
                .continuation
                .iter()
                .copied()
                .take(depth)
                .collect(),
            None => Vec::new(),
        }
    }
}
