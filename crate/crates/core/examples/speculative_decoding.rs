//! Draft tree construction and speculative generation against plain
//! autoregressive decoding on the same random stream.

use tailspec::drafter::{AdaptiveDrafter, DrafterConfig};
use tailspec::rng::RngStream;
use tailspec::spec::{build_draft_tree, spec_generate, DecodeMode, DraftSource, SpecStrategy};
use tailspec::spot::pack_sequences;
use tailspec::target::{generate_autoregressive, MarkovTargetModel, TargetShape};

fn main() {
    let shape = TargetShape {
        vocab: 16,
        order: 2,
        concentration: 0.05,
        context_coupling: 0.1,
    };
    let root = RngStream::new(3, 0);
    let target = MarkovTargetModel::random(shape, &mut root.substream(1))
        .unwrap()
        .with_temperature(0.8)
        .unwrap();
    let warm = generate_autoregressive(&target, &[], 20_000, &mut root.substream(2));
    let mut drafter = AdaptiveDrafter::new(DrafterConfig {
        vocab: 16,
        order: 1,
        smoothing_alpha: 0.1,
        count_cap: None,
    })
    .unwrap();
    drafter.train_on_batch(&pack_sequences(&[warm], 20_000));

    let strategy = SpecStrategy::new(6, 3, 16).unwrap();
    let tree = build_draft_tree(&drafter, &[], &strategy);
    println!("tree: {} nodes, depth {}, ancestor closed {}", tree.len(), tree.max_depth(), tree.is_ancestor_closed());

    let stream = root.substream(3);
    let plain = generate_autoregressive(&target, &[], 2000, &mut stream.clone());
    // Tree verification couples draft and target draws, so it reproduces the
    // plain decode exactly. Linear verification matches it only in law.
    for mode in [DecodeMode::GreedyTree, DecodeMode::StochasticLinear] {
        let out = spec_generate(&target, DraftSource::Model(&drafter), &[], 2000, &strategy, mode, &mut stream.clone());
        println!(
            "{mode:?}: {} tokens in {} target passes ({:.2} per pass), token-identical to plain decode: {}",
            out.tokens.len(),
            out.accept_lengths.len(),
            out.tokens.len() as f64 / out.accept_lengths.len() as f64,
            out.tokens == plain
        );
    }
}
