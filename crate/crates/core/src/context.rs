//! Fixed-order context windows packed into integer keys.

use crate::token::TokenId;

/// Packs the last `order` tokens of a sequence into a `u64`, left-padding
/// with [`TokenId::BEGIN`] when the sequence is shorter than the order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextCodec {
    vocab: usize,
    order: usize,
}

impl ContextCodec {
    /// `None` when `(vocab + 1)^order` does not fit in a `u64`.
    pub fn new(vocab: usize, order: usize) -> Option<Self> {
        let base = (vocab as u64).checked_add(1)?;
        base.checked_pow(order as u32)?;
        Some(Self { vocab, order })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn digit(&self, t: TokenId) -> u64 {
        if t.is_begin() {
            self.vocab as u64
        } else {
            debug_assert!(t.index() < self.vocab, "token {t} outside vocabulary");
            t.0 as u64
        }
    }

    pub fn key(&self, seq: &[TokenId]) -> u64 {
        let base = self.vocab as u64 + 1;
        let take = seq.len().min(self.order);
        let pad = self.order - take;
        let begin = self.vocab as u64;
        let mut key = 0u64;
        for _ in 0..pad {
            key = key * base + begin;
        }
        for &t in &seq[seq.len() - take..] {
            key = key * base + self.digit(t);
        }
        key
    }

    /// The padded window a key stands for, oldest token first.
    pub fn decode(&self, mut key: u64) -> Vec<TokenId> {
        let base = self.vocab as u64 + 1;
        let mut out = vec![TokenId::BEGIN; self.order];
        for slot in out.iter_mut().rev() {
            let d = key % base;
            key /= base;
            *slot = if d == self.vocab as u64 {
                TokenId::BEGIN
            } else {
                TokenId(d as u32)
            };
        }
        out
    }

    /// Every window reachable by left-padding a real sequence: some run of
    /// BEGIN tokens followed by vocabulary tokens.
    pub fn reachable_keys(&self) -> Vec<u64> {
        let mut keys = Vec::new();
        let mut window = vec![TokenId::BEGIN; self.order];
        for pad in (0..=self.order).rev() {
            let free = self.order - pad;
            let count = self.vocab.pow(free as u32);
            for mut idx in 0..count {
                for pos in (pad..self.order).rev() {
                    window[pos] = TokenId((idx % self.vocab) as u32);
                    idx /= self.vocab;
                }
                keys.push(self.key(&window));
            }
        }
        keys.sort_unstable();
        keys
    }
}
