use serde::{Deserialize, Serialize};

use super::tree::{build_draft_tree, DraftTree, SpecStrategy};
use super::verify::{
    draft_chain_sampled, verify_stochastic, verify_tree_sampled, AcceptResult, DraftChain,
};
use crate::drafter::NgramIndex;
use crate::rng::RngStream;
use crate::target::{MarkovTargetModel, NextTokenModel};
use crate::token::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Tree drafting; the target picks each token by inverse CDF on the
    /// request stream, which is argmax matching at temperature 0.
    GreedyTree,
    /// Sampled linear drafts with speculative-sampling acceptance.
    StochasticLinear,
}

/// Where draft tokens come from.
#[derive(Clone, Copy)]
pub enum DraftSource<'a> {
    Model(&'a dyn NextTokenModel),
    Ngram(&'a NgramIndex),
}

/// One draft-and-verify pass over `seq` (prompt plus everything generated).
/// Emits between 1 and `max_emit` tokens.
pub fn speculative_step(
    target: &MarkovTargetModel,
    source: DraftSource<'_>,
    seq: &[TokenId],
    strategy: &SpecStrategy,
    mode: DecodeMode,
    rng: &mut RngStream,
    max_emit: usize,
) -> AcceptResult {
    match mode {
        DecodeMode::GreedyTree => {
            let tree = match source {
                DraftSource::Model(m) => build_draft_tree(m, seq, strategy),
                DraftSource::Ngram(idx) => DraftTree::chain(&idx.draft(seq, strategy.draft_depth)),
            };
            verify_tree_sampled(target, seq, &tree, rng, max_emit)
        }
        DecodeMode::StochasticLinear => {
            let chain = match source {
                DraftSource::Model(m) => draft_chain_sampled(m, seq, strategy.draft_depth, rng),
                DraftSource::Ngram(idx) => {
                    DraftChain::deterministic(idx.draft(seq, strategy.draft_depth), target.vocab())
                }
            };
            verify_stochastic(target, seq, &chain, rng, max_emit)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecOutput {
    pub tokens: Vec<TokenId>,
    pub accept_lengths: Vec<usize>,
}

/// Draft, verify, append until EOS or `max_len` generated tokens.
pub fn spec_generate(
    target: &MarkovTargetModel,
    source: DraftSource<'_>,
    prompt: &[TokenId],
    max_len: usize,
    strategy: &SpecStrategy,
    mode: DecodeMode,
    rng: &mut RngStream,
) -> SpecOutput {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut seq = prompt.to_vec();
    let mut accept_lengths = Vec::new();
    loop {
        let generated = seq.len() - prompt.len();
        let r = speculative_step(
            target,
            source,
            &seq,
            strategy,
            mode,
            rng,
            max_len - generated,
        );
        accept_lengths.push(r.accept_length());
        seq.extend_from_slice(&r.accepted);
        seq.push(r.bonus);
        if seq.len() - prompt.len() >= max_len || Some(r.bonus) == target.eos() {
            break;
        }
    }
    SpecOutput {
        tokens: seq.split_off(prompt.len()),
        accept_lengths,
    }
}
