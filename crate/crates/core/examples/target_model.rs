//! Random order-2 Markov target: sample, temper, drift and serialize.

use tailspec::rng::RngStream;
use tailspec::target::{generate_autoregressive, MarkovTargetModel, TargetShape};
use tailspec::token::tokens;

fn main() {
    let shape = TargetShape {
        vocab: 8,
        order: 2,
        concentration: 1.0,
        context_coupling: 0.2,
    };
    let root = RngStream::new(1, 0);
    let target = MarkovTargetModel::random(shape, &mut root.substream(1))
        .unwrap()
        .with_temperature(0.7)
        .unwrap();

    let sample = generate_autoregressive(&target, &tokens(&[3]), 24, &mut root.substream(2));
    println!("sample: {:?}", sample.iter().map(|t| t.0).collect::<Vec<_>>());

    let ctx = tokens(&[3, 5]);
    println!("row after [3, 5]: {:.3?}", target.target_next_dist(&ctx).probs());
    let drifted = target.apply_drift(0.3, &mut root.substream(3));
    println!(
        "after drift 0.3: {:.3?} (tv {:.3})",
        drifted.target_next_dist(&ctx).probs(),
        target.target_next_dist(&ctx).total_variation(drifted.target_next_dist(&ctx))
    );

    let json = target.to_json();
    let back = MarkovTargetModel::from_json(&json).unwrap();
    println!("json round trip: {} bytes, equal rows {}", json.len(), back.raw_row(&ctx) == target.raw_row(&ctx));
}
