//! Graph-capture memory for the default strategies: every strategy in every
//! bucket against captures only for the arms each bucket can route to.

use tailspec::experiment::{run_plan, ExperimentConfig};

fn main() {
    let report = run_plan(&ExperimentConfig::default()).unwrap();
    for e in report.entries.iter().filter(|e| e.plan == "bucketed") {
        println!(
            "{:<6} batch {:>2}..{:<2} verify {:?} top_k {:?} depth {:?}: {} units",
            e.side, e.bucket_low, e.bucket_high, e.tokens_to_verify, e.top_k, e.draft_depth, e.memory_units
        );
    }
    let s = &report.summary;
    println!(
        "vanilla {} entries / {} units, bucketed {} entries / {} units, ratio {:.2}",
        s.vanilla_entries, s.vanilla_units, s.bucketed_entries, s.bucketed_units, s.ratio
    );
}
