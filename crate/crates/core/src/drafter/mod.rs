//! Draft-token sources: the trainable count drafter and the model-free
//! n-gram retriever.

mod adaptive;
mod checkpoint;
mod ngram;

pub use adaptive::{AdaptiveDrafter, DrafterConfig};
pub use checkpoint::{CheckpointError, DrafterCheckpoint, FORMAT_VERSION};
pub use ngram::{NgramEntry, NgramIndex, DEFAULT_CONTINUATION_LEN};
