use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn tailspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailspec")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn verify_at_temperature_zero_reports_equality() {
    let o = tailspec(&["verify", "--temperature", "0", "--cases", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["identical"], true);
    assert_eq!(v["mismatches"], 0);
}

#[test]
fn plan_prints_the_memory_ratio() {
    let o = tailspec(&["plan"]);
    assert!(o.status.success());
    let ratio = stdout_json(&o)["summary"]["ratio"].as_f64().unwrap();
    assert!(ratio >= 2.0, "{ratio}");
}

#[test]
fn fsm_violation_exits_nonzero_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    fs::write(
        &trace,
        r#"{"workers": [{"worker_id": 0}, {"worker_id": 1}],
            "events": [{"event": "transition", "worker_id": 0, "to": "IDLE"},
                       {"event": "transition", "worker_id": 0, "to": "TRAINING"}]}"#,
    )
    .unwrap();
    let o = tailspec(&["fsm", trace.to_str().unwrap()]);
    assert!(!o.status.success());
    let e = stderr_json(&o);
    assert_eq!(e["detail"]["violation"]["error"], "no_session");
    assert!(e["message"].as_str().unwrap().contains("IDLE -> TRAINING"));
}

#[test]
fn fsm_writes_event_tables() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    fs::write(
        &trace,
        r#"{"idle_threshold": 1, "workers": [{"worker_id": 2}],
            "events": [{"event": "transition", "worker_id": 2, "to": "IDLE"}, {"event": "rollout_done"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = tailspec(&["fsm", trace.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let events = fs::read_to_string(out.join("fsm_events.csv")).unwrap();
    assert!(events.contains("START_TRAINING:2"));
    assert!(events.contains("PREEMPT:2;CHECKPOINT_REQUEST:2"));
}

#[test]
fn defaults_round_trip_through_config() {
    let o = tailspec(&["simulate", "--print-defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = tailspec::experiment::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, tailspec::experiment::ExperimentConfig::default());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\n[target]\nvocabulary = 4\n").unwrap();
    let o = tailspec(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config_parse");
    assert!(e["message"].as_str().unwrap().contains("vocabulary"));
}

#[test]
fn invalid_override_names_the_field() {
    let o = tailspec(&["tune", "--window", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config_invalid");
    assert_eq!(e["field"], "window");
}

#[test]
fn usage_errors_are_json() {
    let o = tailspec(&["simulate", "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn small_simulation_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "rl_steps = 1\n[workload]\nrequests = 8\nmu = 5.5\nmax_len = 2048\n").unwrap();
    let out = dir.path().join("out");
    let o = tailspec(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["seed"], 3);
    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 1);
    let trace = fs::read_to_string(out.join("engine_trace.jsonl")).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[test]
fn tune_overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = tailspec(&[
        "tune",
        "--epsilon",
        "0",
        "--rounds",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["summary"]["explorations"], 0);
    let rounds = fs::read_to_string(dir.path().join("tune_rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 51);
}
