use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
seed = 1

[synth]
train_size = 12
dev_size = 6

[training]
steps = 6
batch_size = 4

[training.model]
max_types = 10

[training.model.encoder]
depth = 1
width = 8
heads = 2
ffn_mult = 2
max_positions = 160

[training.model.heads]
max_width = 4
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typespan")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn synth_train_predict_evaluate_round_trip() {
    let dir = setup();
    ok(&["synth-data", "--config", &p(&dir, "tiny.toml"), "--seed", "3", "--out", &p(&dir, "data")]);
    let train = lines(&dir.path().join("data/train.jsonl"));
    assert_eq!(train.len(), 12);
    assert_eq!(lines(&dir.path().join("data/dev.jsonl")).len(), 6);
    assert!(train[0]["tokenized_text"].is_array() && train[0]["ner"].is_array());

    let out = ok(&[
        "train",
        "--config",
        &p(&dir, "tiny.toml"),
        "--train",
        &p(&dir, "data/train.jsonl"),
        "--dev",
        &p(&dir, "data/dev.jsonl"),
        "--steps",
        "4",
        "--out",
        &p(&dir, "run"),
    ]);
    assert!(out.contains("dev precision"));
    assert_eq!(lines(&dir.path().join("run/trace.jsonl")).len(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/dev_report.json")).unwrap()).unwrap();
    assert!(report["f1"].is_number());

    ok(&[
        "predict",
        "--checkpoint",
        &p(&dir, "run/model.ckpt"),
        "--input",
        &p(&dir, "data/dev.jsonl"),
        "--threshold",
        "0.3",
        "--scores",
        &p(&dir, "scores.jsonl"),
        "--out",
        &p(&dir, "pred.jsonl"),
    ]);
    let pred = lines(&dir.path().join("pred.jsonl"));
    assert_eq!(pred.len(), lines(&dir.path().join("data/dev.jsonl")).len());

    let eval = ok(&["evaluate", "--pred", &p(&dir, "pred.jsonl"), "--gold", &p(&dir, "data/dev.jsonl")]);
    let eval: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert!(eval["precision"].is_number() && eval["per_type"].is_object());

    // decoding the exported tables reproduces predict's mentions
    let decoded = ok(&["decode-scores", "--input", &p(&dir, "scores.jsonl"), "--threshold", "0.3"]);
    let decoded: Vec<serde_json::Value> = decoded.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(decoded.len(), pred.len());
    for (d, p) in decoded.iter().zip(&pred) {
        let spans: Vec<_> = d.as_array().unwrap().iter().map(|m| (m["start"].clone(), m["end"].clone())).collect();
        let expect: Vec<_> = p["ner"].as_array().unwrap().iter().map(|m| (m[0].clone(), m[1].clone())).collect();
        assert_eq!(spans, expect);
    }
}

#[test]
fn predict_raw_text_and_train_on_generator() {
    let dir = setup();
    ok(&["train", "--config", &p(&dir, "tiny.toml"), "--out", &p(&dir, "run")]);
    let out = ok(&[
        "predict",
        "--checkpoint",
        &p(&dir, "run/model.ckpt"),
        "--text",
        "Alain Farley works at McGill University",
        "--types",
        "person,organization",
        "--mode",
        "nested",
    ]);
    let rec: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(rec["tokenized_text"].as_array().unwrap().len(), 6);
}

#[test]
fn gradcheck_command_reports_a_table() {
    let dir = setup();
    let out = ok(&["gradcheck", "--config", &p(&dir, "tiny.toml"), "--seeds", "2", "--coords", "2"]);
    assert!(out.contains("embed.tokens"));
    assert_eq!(out.matches(": max f64").count(), 2);
    assert!(!out.contains("FAIL"));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = setup();
    let out = run(&["predict", "--checkpoint", &p(&dir, "missing.ckpt"), "--text", "a b", "--types", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    fs::write(dir.path().join("bad.toml"), "[training]\nreduction = \"avg\"\n").unwrap();
    let out = run(&["train", "--config", &p(&dir, "bad.toml"), "--out", &p(&dir, "run")]);
    assert!(!out.status.success());

    fs::write(dir.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    let out = run(&["predict", "--checkpoint", &p(&dir, "bad.ckpt"), "--text", "a", "--types", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
