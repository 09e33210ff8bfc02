//! Count drafter trained on packed target samples, checkpointed and
//! restored, next to the n-gram retrieval index.

use tailspec::drafter::{AdaptiveDrafter, DrafterCheckpoint, DrafterConfig, NgramIndex};
use tailspec::rng::RngStream;
use tailspec::spot::pack_sequences;
use tailspec::target::{generate_autoregressive, MarkovTargetModel, NextTokenModel, TargetShape};
use tailspec::token::tokens;

fn main() {
    let shape = TargetShape {
        vocab: 6,
        order: 1,
        concentration: 0.2,
        context_coupling: 0.0,
    };
    let root = RngStream::new(2, 0);
    let target = MarkovTargetModel::random(shape, &mut root.substream(1)).unwrap();
    let data: Vec<_> = (0..20)
        .map(|i| generate_autoregressive(&target, &[], 200, &mut root.substream(10 + i)))
        .collect();

    let config = DrafterConfig {
        vocab: 6,
        order: 1,
        smoothing_alpha: 0.1,
        count_cap: Some(1024),
    };
    let mut drafter = AdaptiveDrafter::new(config).unwrap();
    drafter.train_on_batch(&pack_sequences(&data, 1024));
    let ctx = tokens(&[2]);
    println!("version {}", drafter.version());
    println!("target  {:.3?}", target.target_next_dist(&ctx).probs());
    println!("drafter {:.3?}", drafter.next_dist(&ctx).probs());

    let bytes = drafter.save_checkpoint().encode();
    let restored = AdaptiveDrafter::restore_checkpoint(DrafterCheckpoint::decode(&bytes).unwrap(), &config).unwrap();
    println!("checkpoint {} bytes, restored equal {}", bytes.len(), restored.next_dist(&ctx) == drafter.next_dist(&ctx));

    let mut index = NgramIndex::new(3, 6);
    for (step, seq) in data.iter().enumerate() {
        index.insert(seq, step as u64);
    }
    let probe = &data[0][..3];
    println!(
        "ngram: {} keys, draft after {:?} -> {:?}",
        index.key_count(),
        probe.iter().map(|t| t.0).collect::<Vec<_>>(),
        index.draft(probe, 4).iter().map(|t| t.0).collect::<Vec<_>>()
    );
}
