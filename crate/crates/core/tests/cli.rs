use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn proact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proact")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_rollout_eval_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let log = dir.path().join("log.jsonl");
    let report = dir.path().join("report.json");
    let frontier = dir.path().join("frontier.csv");

    let out = proact(&["gen-tasks", "--env", "telepathy", "--seed", "3", "--episodes", "6", "--out", arg(&tasks)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ids: Vec<Value> =
        std::fs::read_to_string(&tasks).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(ids.len(), 6);
    assert!(ids[0]["task_id"].as_str().unwrap().starts_with("telepathy:"));

    let out = proact(&["rollout", "--tasks", arg(&tasks), "--agent", "behavioral", "--lambda-ans", "0.1", "--out", arg(&log)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar = std::fs::read_to_string(log.with_extension("jsonl.config")).unwrap();
    assert!(sidecar.lines().any(|l| l == "lambda_ans=0.1"), "{sidecar}");

    let out = proact(&["eval", "--in", arg(&log), "--k-max", "3", "--out", arg(&report), "--frontier", arg(&frontier)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["n_trajectories"], 6);
    assert_eq!(r["pass_at_u"].as_object().unwrap().len(), 3);
    assert!(std::fs::read_to_string(&frontier).unwrap().lines().count() >= 2);

    let out = proact(&["replay", "--in", arg(&log), "--lambda-ans", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("replayed 6"));

    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"raw_reward\":0.0", "\"raw_reward\":0.5", 1);
    assert_ne!(tampered, text);
    std::fs::write(&log, tampered).unwrap();
    assert_eq!(proact(&["replay", "--in", arg(&log), "--lambda-ans", "0.1"]).status.code(), Some(2));
}

#[test]
fn short_training_run_writes_a_usable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("policy.json");
    let curve = dir.path().join("curve.csv");
    let log = dir.path().join("log.jsonl");
    let out = proact(&[
        "train", "--env", "telepathy", "--epochs", "2", "--episodes", "16", "--out", arg(&ckpt), "--curve", arg(&curve),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&curve).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 3);
    let out = proact(&[
        "rollout", "--env", "telepathy", "--agent", "trainable", "--checkpoint", arg(&ckpt), "--episodes", "4", "--out", arg(&log),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes_separate_usage_config_and_runtime_errors() {
    assert_eq!(proact(&["--help"]).status.code(), Some(0));
    assert_eq!(proact(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(proact(&["rollout", "--agent", "psychic"]).status.code(), Some(1));
    assert_eq!(proact(&["rollout", "--lambda-ans", "-1"]).status.code(), Some(1));
    assert_eq!(proact(&["eval", "--in", "/nonexistent/log.jsonl"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(proact(&["gen-tasks", "--config", arg(&cfg)]).status.code(), Some(1));
}
