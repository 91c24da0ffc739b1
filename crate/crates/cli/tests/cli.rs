//! Drives the `emoretrofit` binary: artifacts, exit codes and flag handling.

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emoretrofit"))
        .current_dir(dir)
        .args(args)
        .env("EMORETROFIT_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// A 6-class corpus small enough for quick runs.
fn small_corpus(dir: &Path) {
    ok(
        dir,
        &["gen-synthetic", "--out", "c.jsonl", "--classes", "6", "--dim", "8", "--per-class", "20", "--signal-dims", "6"],
    );
}

#[test]
fn retrofit_writes_artifacts_with_job_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    let before = std::fs::read(d.join("c.jsonl")).unwrap();
    ok(d, &["retrofit", "--corpus", "c.jsonl", "--out", "r", "--epochs", "2", "--batch-size", "12", "--lambda", "0.5"]);
    assert_eq!(std::fs::read(d.join("c.jsonl")).unwrap(), before, "input corpus modified");

    let text = std::fs::read_to_string(d.join("r/checkpoint.json")).unwrap();
    assert!(text.contains("emoretrofit 0.1.0"));
    assert!(text.contains("\"command\":\"retrofit\""));
    let history = std::fs::read_to_string(d.join("r/history.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(history.lines().next().unwrap()).unwrap();
    assert_eq!(header["engine_version"], "emoretrofit 0.1.0");
    assert_eq!(header["job"]["train"]["loss"]["lambda"], 0.5);
    assert_eq!(header["job"]["train"]["epochs"], 2);

    let corpus_header: serde_json::Value = serde_json::from_slice(before.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(corpus_header["meta"]["engine_version"], "emoretrofit 0.1.0");
    assert_eq!(corpus_header["meta"]["job"]["synthetic"]["classes"], 6);
}

#[test]
fn eval_without_checkpoint_reports_the_base() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    ok(d, &["eval", "--corpus", "c.jsonl", "--checkpoint", "none", "--out", "e.json", "--emit-neighbors", "n.json"]);
    let report = json(&d.join("e.json"));
    assert_eq!(report["report"]["delta_emb"], 0.0);
    assert_eq!(report["job"]["command"], "eval");
    let neighbours = json(&d.join("n.json"));
    let rows = neighbours["neighbours"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["neighbours"].as_array().unwrap().len() <= 10));
}

#[test]
fn config_file_is_merged_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    std::fs::write(d.join("job.toml"), "[train]\nepochs = 1\nlr = 0.01\n[train.loss]\nmemory = 16\n").unwrap();
    ok(
        d,
        &["--config", "job.toml", "retrofit", "--corpus", "c.jsonl", "--out", "r", "--lr", "0.002", "--batch-size", "12"],
    );
    let ckpt = std::fs::read_to_string(d.join("r/checkpoint.json")).unwrap();
    let job = &json(&d.join("r/checkpoint.json"))["payload"]["job"];
    assert_eq!(job["train"]["epochs"], 1, "{ckpt}");
    assert_eq!(job["train"]["lr"], 0.002);
    assert_eq!(job["train"]["loss"]["memory"], 16);
}

#[test]
fn fewshot_writes_subsamples_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    ok(d, &["fewshot", "--corpus", "c.jsonl", "--checkpoint", "none", "--sizes", "6,12", "--out", "f"]);
    for size in [6, 12] {
        let text = std::fs::read_to_string(d.join(format!("f/fewshot_{size}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), size + 1);
    }
    let report = json(&d.join("f/fewshot_report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["size"], 12);
}

#[test]
fn knn_report_has_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    let out = ok(d, &["knn", "--corpus", "c.jsonl", "--checkpoint", "none", "--k", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["k"], 3);
    let f1 = v["knn_micro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
}

#[test]
fn sweep_then_select() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    std::fs::write(
        d.join("job.toml"),
        "[grid]\ntemperature = [0.1]\nlambda = [0.05, 1.0]\nmemory = [16]\nhead = [\"linear\"]\nlr = [0.001]\nsampler = [\"m_per_class\"]\n[train]\nepochs = 1\n",
    )
    .unwrap();
    ok(d, &["--config", "job.toml", "sweep", "--corpus", "c.jsonl", "--out", "s", "--batch-size", "12"]);
    let manifest = json(&d.join("s/manifest.json"));
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    ok(d, &["select", "--sweep", "s", "--threshold", "2.0", "--out", "w.json"]);
    let winner = json(&d.join("w.json"));
    assert!(winner["winner"].as_str().unwrap().starts_with("mperclass_linear"));
    assert_eq!(run(d, &["select", "--sweep", "s", "--threshold", "0"]).status.code(), Some(4));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    assert_eq!(run(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(d, &["retrofit", "--corpus", "c.jsonl", "--out", "r", "--lr=-1"]).status.code(), Some(1));
    assert_eq!(run(d, &["retrofit", "--corpus", "c.jsonl", "--out", "r", "--head", "conv"]).status.code(), Some(1));
    std::fs::write(d.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(run(d, &["--config", "bad.toml", "eval", "--corpus", "c.jsonl", "--checkpoint", "none"]).status.code(), Some(1));
    assert_eq!(run(d, &["eval", "--corpus", "missing.jsonl", "--checkpoint", "none"]).status.code(), Some(2));
    std::fs::write(d.join("broken.jsonl"), "{\"format_version\":\"emoretrofit-corpus-v1\"}\n{\"id\":1}\n").unwrap();
    assert_eq!(run(d, &["eval", "--corpus", "broken.jsonl", "--checkpoint", "none"]).status.code(), Some(2));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn thread_override_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emoretrofit"))
        .current_dir(dir.path())
        .args(["gen-synthetic", "--out", "c.jsonl"])
        .env("EMORETROFIT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
