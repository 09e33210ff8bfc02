//! First-fit-decreasing packing of long-tail responses against one padded
//! row per response.

use tailspec::experiment::ExperimentConfig;
use tailspec::rng::RngStream;
use tailspec::spot::{pack_sequences, padded_utilization};
use tailspec::token::TokenId;

fn main() {
    let dist = ExperimentConfig::default().workload_config().lengths;
    let mut rng = RngStream::new(7, 0);
    let lengths: Vec<usize> = (0..128).map(|_| dist.sample(&mut rng)).collect();
    let seqs: Vec<Vec<TokenId>> = lengths.iter().map(|&l| vec![TokenId(0); l]).collect();
    for capacity in [4096, 8192, 16384] {
        let packed = pack_sequences(&seqs, capacity);
        let padded = padded_utilization(&lengths, capacity);
        println!(
            "capacity {capacity:>5}: {:>3} packs, utilization {:.3} vs padded {:.3} ({:.2}x)",
            packed.packs().len(),
            packed.utilization(),
            padded,
            packed.utilization() / padded
        );
    }
}
