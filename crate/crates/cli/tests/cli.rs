use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use termnorm::corpus::SyntheticSpec;
use termnorm::mtcg::EncoderShape;
use termnorm::run::RunConfig;

fn termnorm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_termnorm"))
        .current_dir(dir)
        .args(["--seed", "3", "--config", "config.json", "--model-dir", "model"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = termnorm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        kb_size: 40,
        mention_count: 80,
        ..Default::default()
    };
    fs::write(tmp.path().join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let shape = EncoderShape {
        layers: 1,
        d: 16,
        heads: 2,
        d_ff: 32,
        ..Default::default()
    };
    let mut cfg = RunConfig {
        encoder: shape,
        kar_encoder: shape,
        ..Default::default()
    };
    cfg.mtcg.epochs = 1;
    cfg.kar.epochs = 1;
    cfg.save(&tmp.path().join("config.json")).unwrap();
    tmp
}

#[test]
fn pipeline_smoke() {
    let tmp = workspace();
    let dir = tmp.path();
    ok(dir, &["gen-data", "--out", "data", "--spec", "spec.json"]);
    for f in ["kb.tsv", "train.jsonl", "test.jsonl"] {
        assert!(dir.join("data").join(f).exists(), "{f}");
    }
    let train = ["--kb", "data/kb.tsv", "--train", "data/train.jsonl", "--keywords", "data/keywords.tsv"];
    ok(dir, &[&["train-mtcg"][..], &train].concat());
    ok(dir, &[&["train-kar"][..], &train].concat());
    ok(dir, &["normalize", "--kb", "data/kb.tsv", "--input", "data/test.jsonl", "--out", "results.jsonl"]);
    let results = fs::read_to_string(dir.join("results.jsonl")).unwrap();
    let test = fs::read_to_string(dir.join("data/test.jsonl")).unwrap();
    assert_eq!(results.lines().count(), test.lines().count());

    let report = ok(
        dir,
        &["eval", "--results", "results.jsonl", "--gold", "data/test.jsonl", "--kb", "data/kb.tsv"],
    );
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v.is_object(), "{report}");
}

#[test]
fn gold_file_scores_perfectly() {
    let tmp = workspace();
    let dir = tmp.path();
    ok(dir, &["gen-data", "--out", "data", "--spec", "spec.json"]);
    let gold = fs::read_to_string(dir.join("data/test.jsonl")).unwrap();
    let mut fake = String::new();
    for (i, line) in gold.lines().enumerate() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        let row = serde_json::json!({
            "mention_id": i,
            "mention": r["mention"],
            "implication": 1,
            "selected": r["codes"],
            "candidates": [],
        });
        fake.push_str(&row.to_string());
        fake.push('\n');
    }
    fs::write(dir.join("gold_results.jsonl"), fake).unwrap();
    let report = ok(
        dir,
        &["eval", "--results", "gold_results.jsonl", "--gold", "data/test.jsonl", "--kb", "data/kb.tsv"],
    );
    assert!(report.contains("100.0"), "{report}");
}

#[test]
fn empty_input_is_an_error() {
    let tmp = workspace();
    let dir = tmp.path();
    ok(dir, &["gen-data", "--out", "data", "--spec", "spec.json"]);
    let train = ["--kb", "data/kb.tsv", "--train", "data/train.jsonl", "--keywords", "data/keywords.tsv"];
    ok(dir, &[&["train-mtcg"][..], &train].concat());
    ok(dir, &[&["train-kar"][..], &train].concat());
    fs::write(dir.join("empty.jsonl"), "").unwrap();
    let out = termnorm(dir, &["normalize", "--kb", "data/kb.tsv", "--input", "empty.jsonl", "--out", "r.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!dir.join("r.jsonl").exists());
}

#[test]
fn usage_errors() {
    let tmp = workspace();
    let out = termnorm(tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = termnorm(
        tmp.path(),
        &["mine-negatives", "--kb", "x", "--train", "y", "--strategy", "bogus", "--out", "z"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = termnorm(tmp.path(), &["normalize", "--kb", "missing.tsv", "--input", "a", "--out", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));
}
