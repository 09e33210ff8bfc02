//! Bucketed epsilon-greedy strategy selection on a synthetic environment
//! where deeper trees pay off only at small batch sizes.

use tailspec::mab::BegMab;
use tailspec::rng::RngStream;
use tailspec::spec::SpecStrategy;

fn main() {
    let arms = vec![
        SpecStrategy::new(8, 4, 32).unwrap(),
        SpecStrategy::new(6, 4, 32).unwrap(),
        SpecStrategy::new(4, 2, 8).unwrap(),
        SpecStrategy::new(3, 2, 8).unwrap(),
    ];
    let mut mab = BegMab::new(arms, vec![1, 8], 0.1, 20).unwrap();
    for (low, high) in mab.buckets() {
        println!("bucket [{low}, {high:?}] serves {:?}", mab.group(mab.bucket_of(low).unwrap()));
    }
    let mut rng = RngStream::new(4, 0);
    for round in 0..400 {
        let batch = if round % 2 == 0 { 2 } else { 16 };
        let s = mab.select(batch, &mut rng).unwrap();
        let accepted = (s.draft_depth / 2).min(3);
        let elapsed = 1.0 + 0.05 * s.draft_depth as f64 * batch as f64 / 4.0;
        mab.record(&s, elapsed, &vec![accepted; batch], batch).unwrap();
    }
    println!("{}", serde_json::to_string_pretty(&mab.dump()).unwrap());
}
