//! Preemptible drafter training on idle workers.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::buffer::DataBuffer;
use super::coordinator::TrainingSession;
use super::packing::pack_sequences;
use crate::drafter::{AdaptiveDrafter, CheckpointError, DrafterCheckpoint};

/// Polled between iterations, never during one.
pub trait PreemptSignal {
    fn should_stop(&self) -> bool;
}

impl PreemptSignal for AtomicBool {
    fn should_stop(&self) -> bool {
        self.load(Ordering::Acquire)
    }
}

/// Fires once `limit` iterations have been allowed, standing in for the
/// simulated time left before the rollout finishes.
#[derive(Debug)]
pub struct IterationBudget {
    limit: u64,
    polls: std::cell::Cell<u64>,
}

impl IterationBudget {
    pub fn new(limit: u64) -> Self {
        Self {
            limit,
            polls: std::cell::Cell::new(0),
        }
    }
}

impl PreemptSignal for IterationBudget {
    fn should_stop(&self) -> bool {
        let n = self.polls.get();
        self.polls.set(n + 1);
        n >= self.limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotTrainConfig {
    pub iterations_per_slot: u64,
    pub token_budget: usize,
    pub pack_capacity: usize,
    pub checkpoint_every: u64,
}

impl Default for SpotTrainConfig {
    fn default() -> Self {
        Self {
            iterations_per_slot: 1000,
            token_budget: 65536,
            pack_capacity: 8192,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Preempted,
    SlotFinished,
    DataExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub leader_id: u32,
    pub members: Vec<u32>,
    pub entering_version: u64,
    pub iterations: u64,
    /// Drafter version after each completed iteration.
    pub versions: Vec<u64>,
    pub tokens_trained: u64,
    /// Drafter versions at which a checkpoint was requested.
    pub checkpoint_versions: Vec<u64>,
    pub stop: StopReason,
}

/// Encodes snapshots on background threads; optionally writes each to disk.
#[derive(Debug, Default)]
pub struct AsyncCheckpointer {
    dir: Option<PathBuf>,
    pending: Vec<JoinHandle<Result<Vec<u8>, CheckpointError>>>,
}

impl AsyncCheckpointer {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_dir(dir: PathBuf) -> Self {
        Self {
            dir: Some(dir),
            pending: Vec::new(),
        }
    }

    /// Snapshots `drafter` now; the encode and write happen off-thread.
    pub fn request(&mut self, drafter: &AdaptiveDrafter) {
        let snapshot = drafter.save_checkpoint();
        let path = self
            .dir
            .as_ref()
            .map(|d| d.join(format!("drafter-v{:08}.ckpt", snapshot.version)));
        self.pending.push(std::thread::spawn(move || {
            let bytes = snapshot.encode();
            if let Some(path) = path {
                std::fs::write(path, &bytes)?;
            }
            Ok(bytes)
        }));
    }

    /// Waits for every outstanding write, returning encoded checkpoints in
    /// request order.
    pub fn finish(&mut self) -> Result<Vec<Vec<u8>>, CheckpointError> {
        self.pending
            .drain(..)
            .map(|h| h.join().expect("checkpoint thread panicked"))
            .collect()
    }
}

#[derive(Debug)]
pub struct SpotTrainOutcome {
    pub log: TrainingLog,
    /// Encoded checkpoints in request order; the last one matches the drafter
    /// at exit.
    pub checkpoints: Vec<Vec<u8>>,
}

impl SpotTrainOutcome {
    pub fn last_checkpoint(&self) -> Option<DrafterCheckpoint> {
        self.checkpoints
            .last()
            .map(|b| DrafterCheckpoint::decode(b).expect("freshly encoded checkpoint decodes"))
    }
}

/// sample -> pack -> train until preempted, out of data, or out of slot.
/// Every exit path requests a checkpoint. Entries trained on during this call
/// are not sampled again.
pub fn spot_train_loop(
    session: &TrainingSession,
    drafter: &mut AdaptiveDrafter,
    buffer: &DataBuffer,
    config: &SpotTrainConfig,
    preempt: &dyn PreemptSignal,
    checkpointer: &mut AsyncCheckpointer,
) -> Result<SpotTrainOutcome, CheckpointError> {
    let entering_version = drafter.version();
    let mut consumed = BTreeSet::new();
    let mut versions = Vec::new();
    let mut checkpoint_versions = Vec::new();
    let mut tokens_trained = 0u64;
    let step = buffer.current_step();
    let stop = loop {
        if preempt.should_stop() {
            break StopReason::Preempted;
        }
        if versions.len() as u64 >= config.iterations_per_slot {
            break StopReason::SlotFinished;
        }
        let ids = buffer.sample_excluding(step, config.token_budget, &consumed);
        if ids.is_empty() {
            break StopReason::DataExhausted;
        }
        let seqs: Vec<_> = ids
            .iter()
            .map(|&id| buffer.get(id).expect("sampled id exists").sequence.clone())
            .collect();
        consumed.extend(ids);
        let batch = pack_sequences(&seqs, config.pack_capacity);
        tokens_trained += batch.token_count() as u64;
        drafter.train_on_batch(&batch);
        versions.push(drafter.version());
        if config.checkpoint_every > 0 && versions.len() as u64 % config.checkpoint_every == 0 {
            checkpointer.request(drafter);
            checkpoint_versions.push(drafter.version());
        }
    };
    if checkpoint_versions.last() != Some(&drafter.version()) || versions.is_empty() {
        checkpointer.request(drafter);
        checkpoint_versions.push(drafter.version());
    }
    let checkpoints = checkpointer.finish()?;
    Ok(SpotTrainOutcome {
        log: TrainingLog {
            leader_id: session.leader_id,
            members: session.members.iter().copied().collect(),
            entering_version,
            iterations: versions.len() as u64,
            versions,
            tokens_trained,
            checkpoint_versions,
            stop,
        },
        checkpoints,
    })
}
