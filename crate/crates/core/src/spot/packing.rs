//! First-fit-decreasing sequence packing with recorded member boundaries.

use serde::{Deserialize, Serialize};

use crate::token::TokenId;

/// Whole sequences concatenated into fixed-capacity packs, no padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedBatch {
    packs: Vec<Vec<TokenId>>,
    boundaries: Vec<Vec<usize>>,
    capacity: usize,
}

impl PackedBatch {
    pub fn packs(&self) -> &[Vec<TokenId>] {
        &self.packs
    }

    /// Member lengths of each pack, in concatenation order.
    pub fn boundaries(&self) -> &[Vec<usize>] {
        &self.boundaries
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn token_count(&self) -> usize {
        self.packs.iter().map(Vec::len).sum()
    }

    pub fn member_count(&self) -> usize {
        self.boundaries.iter().map(Vec::len).sum()
    }

    /// Every member sequence, pack by pack.
    pub fn members(&self) -> impl Iterator<Item = &[TokenId]> + '_ {
        self.packs
            .iter()
            .zip(&self.boundaries)
            .flat_map(|(pack, lens)| {
                let mut start = 0;
                lens.iter().map(move |&len| {
                    let member = &pack[start..start + len];
                    start += len;
                    member
                })
            })
    }

    /// Real tokens over allocated slots (`packs * capacity`).
    pub fn utilization(&self) -> f64 {
        if self.packs.is_empty() {
            return 0.0;
        }
        self.token_count() as f64 / (self.packs.len() * self.capacity) as f64
    }
}

/// Utilisation when every sequence gets its own capacity-sized row.
pub fn padded_utilization(lengths: &[usize], capacity: usize) -> f64 {
    let rows = lengths.iter().filter(|&&l| l > 0).count();
    if rows == 0 {
        return 0.0;
    }
    let used: usize = lengths.iter().map(|&l| l.min(capacity)).sum();
    used as f64 / (rows * capacity) as f64
}

/// First-fit decreasing. Sequences longer than `capacity` keep only their
/// first `capacity` tokens; empty sequences are dropped. Equal lengths keep
/// input order.
pub fn pack_sequences(sequences: &[Vec<TokenId>], capacity: usize) -> PackedBatch {
    assert!(capacity >= 1, "pack capacity must be at least 1");
    let lengths: Vec<usize> = sequences.iter().map(|s| s.len().min(capacity)).collect();
    let bins = first_fit_decreasing(&lengths, capacity);
    let mut packs = Vec::with_capacity(bins.len());
    let mut boundaries = Vec::with_capacity(bins.len());
    for members in bins {
        let mut pack = Vec::with_capacity(members.iter().map(|&i| lengths[i]).sum());
        let mut lens = Vec::with_capacity(members.len());
        for i in members {
            pack.extend_from_slice(&sequences[i][..lengths[i]]);
            lens.push(lengths[i]);
        }
        packs.push(pack);
        boundaries.push(lens);
    }
    PackedBatch {
        packs,
        boundaries,
        capacity,
    }
}

/// Bin assignment as indices into `lengths`. Zero lengths are skipped and
/// every length must already be `<= capacity`.
pub fn first_fit_decreasing(lengths: &[usize], capacity: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] > 0).collect();
    order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]).then(a.cmp(&b)));
    let mut bins: Vec<Vec<usize>> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    for i in order {
        let len = lengths[i];
        assert!(len <= capacity, "length {len} exceeds capacity {capacity}");
        match free.iter().position(|&f| f >= len) {
            Some(b) => {
                bins[b].push(i);
                free[b] -= len;
            }
            None => {
                bins.push(vec![i]);
                free.push(capacity - len);
            }
        }
    }
    bins
}
