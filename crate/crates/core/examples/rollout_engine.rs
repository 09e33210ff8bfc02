//! One long-tail rollout with and without speculation, printing the step
//! trace where the elastic gate switches speculation on.

use tailspec::experiment::{initial_models, ExperimentConfig};
use tailspec::rng::RngStream;
use tailspec::rollout::{generate_workload, run_rollout, trace_csv, DrafterSnapshot, Drafters};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.workload.requests = 32;
    cfg.workload.mu = 600f64.ln();
    let (target, drafter) = initial_models(&cfg);
    let requests = generate_workload(&cfg.workload_config(), cfg.target.vocab, &mut RngStream::new(5, 0));
    let rollout_cfg = cfg.rollout_config();
    let engine = RngStream::new(5, 1);

    let baseline = run_rollout(
        requests.clone(),
        &target,
        Drafters::none(),
        None,
        &cfg.cost,
        &rollout_cfg,
        &mut engine.clone(),
    );
    let mut mab = cfg.tuner().unwrap();
    let drafters = Drafters {
        adaptive: Some(DrafterSnapshot {
            drafter: &drafter,
            trained_at_step: 0,
        }),
        ngram: None,
        current_step: 0,
    };
    let spec = run_rollout(requests, &target, drafters, Some(&mut mab), &cfg.cost, &rollout_cfg, &mut engine.clone());

    println!(
        "baseline {:.0}, speculative {:.0}, speedup {:.2}x, identical responses {}",
        baseline.total_time,
        spec.total_time,
        baseline.total_time / spec.total_time,
        baseline.responses == spec.responses
    );
    let first_sd = spec.trace.iter().position(|m| m.sd_active).unwrap_or(0);
    let csv = trace_csv(&spec.trace[first_sd.saturating_sub(2)..(first_sd + 4).min(spec.trace.len())]).unwrap();
    print!("{csv}");
}
