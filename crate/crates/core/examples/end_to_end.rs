//! A short simulated RL run with drift, spot training and report output.

use tailspec::experiment::{emit_report, run_experiment, ExperimentConfig, OutputFormat};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.rl_steps = 3;
    cfg.workload.requests = 32;
    cfg.workload.mu = 1000f64.ln();
    let report = run_experiment(&cfg).unwrap();
    for s in &report.steps {
        println!(
            "step {}: speedup {:.2}x, mean accept {:.2}, drafter v{} ({:?}), greedy match {:.3}, {} training iterations",
            s.step,
            s.speedup,
            s.mean_accept.unwrap_or(0.0),
            s.drafter_version,
            s.drafter,
            s.greedy_match_rate,
            s.training_iterations
        );
    }
    println!("aggregate speedup {:.3}x", report.aggregate_speedup);
    let dir = std::env::temp_dir().join("tailspec-end-to-end");
    for f in emit_report(&report, &dir, OutputFormat::Csv).unwrap() {
        println!("wrote {}", f.display());
    }
}
