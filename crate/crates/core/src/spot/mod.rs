//! Opportunistic drafter training on workers that finished their rollout
//! share: coordinator, data buffer, packing and the training loop.

mod buffer;
mod coordinator;
mod packing;
mod trainer;

pub use buffer::{DataBuffer, DataBufferEntry, DEFAULT_RETENTION};
pub use coordinator::{
    Action, Coordinator, Message, MessageKind, ProtocolError, TrainingSession, WorkerRecord,
    WorkerState, DEFAULT_IDLE_THRESHOLD,
};
pub use packing::{first_fit_decreasing, pack_sequences, padded_utilization, PackedBatch};
pub use trainer::{
    spot_train_loop, AsyncCheckpointer, IterationBudget, PreemptSignal, SpotTrainConfig,
    SpotTrainOutcome, StopReason, TrainingLog,
};
