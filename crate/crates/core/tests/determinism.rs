use tailspec::experiment::{emit_report, run_experiment, run_tune, run_verify, ExperimentConfig, OutputFormat, TuneConfig, VerifyConfig};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.rl_steps = 2;
    cfg.workload.requests = 16;
    cfg.workload.mu = 400f64.ln();
    cfg.workload.max_len = 4096;
    cfg
}

fn emitted(cfg: &ExperimentConfig, format: OutputFormat) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(cfg).unwrap();
    emit_report(&r, dir.path(), format)
        .unwrap()
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
        .collect()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = small();
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        assert_eq!(emitted(&cfg, format), emitted(&cfg, format));
    }
}

#[test]
fn seed_changes_the_run() {
    let cfg = small();
    let other = ExperimentConfig { seed: cfg.seed + 1, ..cfg.clone() };
    assert_ne!(emitted(&cfg, OutputFormat::Json), emitted(&other, OutputFormat::Json));
}

#[test]
fn same_report_emits_identical_bytes() {
    let r = run_experiment(&small()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let fa = emit_report(&r, a.path(), format).unwrap();
        let fb = emit_report(&r, b.path(), format).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}

#[test]
fn step_table_round_trips_between_formats() {
    let r = run_experiment(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&r, dir.path(), OutputFormat::Csv).unwrap();
    emit_report(&r, dir.path(), OutputFormat::Json).unwrap();
    let json: tailspec::experiment::RunReport =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let mut csv = csv::Reader::from_path(dir.path().join("steps.csv")).unwrap();
    let rows: Vec<tailspec::experiment::StepReport> = csv.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows, json.steps);
    let strip = |s: &tailspec::experiment::StepReport| tailspec::experiment::StepReport { mab_selections: Default::default(), ..s.clone() };
    assert_eq!(rows, r.steps.iter().map(strip).collect::<Vec<_>>());
}

#[test]
fn aggregate_speedup_is_the_time_ratio() {
    let r = run_experiment(&small()).unwrap();
    let base: f64 = r.steps.iter().map(|s| s.baseline_time).sum();
    let tlt: f64 = r.steps.iter().map(|s| s.tlt_time).sum();
    assert_eq!(r.aggregate_speedup, base / tlt);
    assert!(r.steps.iter().all(|s| s.responses_identical));
}

#[test]
fn tune_and_verify_repeat_exactly() {
    let t = TuneConfig { rounds: 300, ..TuneConfig::default() };
    assert_eq!(run_tune(&t).unwrap(), run_tune(&t).unwrap());
    let v = VerifyConfig { cases: 5, samples: 1000, ..VerifyConfig::default() };
    assert_eq!(run_verify(&v).unwrap(), run_verify(&v).unwrap());
}
