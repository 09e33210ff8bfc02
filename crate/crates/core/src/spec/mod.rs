//! Tree drafting and lossless verification.

mod generate;
mod tree;
mod verify;

pub use generate::{spec_generate, speculative_step, DecodeMode, DraftSource, SpecOutput};
pub use tree::{
    build_draft_tree, max_tree_nodes, DraftNode, DraftTree, SpecStrategy, StrategyError,
};
pub use verify::{
    draft_chain_sampled, residual, verify_greedy, verify_stochastic, verify_tree_sampled,
    AcceptResult, DraftChain,
};
