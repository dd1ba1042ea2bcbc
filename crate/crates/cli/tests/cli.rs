use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn counterarg(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_counterarg"))
        .current_dir(repo())
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const STUBS: [&str; 8] = [
    "--set",
    r#"annotation.big5={"kind":"stub","labels":["openness"]}"#,
    "--set",
    r#"annotation.humval={"kind":"stub","labels":["achievement"]}"#,
    "--set",
    r#"annotation.scheme={"kind":"stub","labels":["goal_means"]}"#,
    "--set",
    r#"annotation.argtype={"kind":"stub","labels":["facts"]}"#,
];

fn stub_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", "configs/toy.json"];
    v.extend(STUBS);
    v.extend(extra);
    v
}

fn digest(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn annotate_toy_corpus_with_stub_ports() {
    let dir = tempfile::tempdir().unwrap();
    let input = repo().join("data/toy/dialogues.jsonl");
    let before = digest(&input);
    let out = counterarg(dir.path(), &stub_args(&["ingest"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = counterarg(dir.path(), &stub_args(&["annotate"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let annotated = std::fs::read_to_string(dir.path().join("artifacts/annotated.jsonl")).unwrap();
    assert_eq!(annotated.lines().count(), 60);
    assert!(annotated.contains("openness") && annotated.contains("facts"));
    for f in ["config.json", "manifest.json", "logs", "artifacts/distribution.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert_eq!(digest(&input), before, "input corpus was modified");

    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("config_hash") && manifest.contains("\"annotate\""));
    let again = counterarg(dir.path(), &stub_args(&["annotate"]));
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stdout).trim().is_empty(), "current stage should be skipped");
}

#[test]
fn restricted_grid_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["ingest", "annotate"] {
        assert!(counterarg(dir.path(), &stub_args(&[cmd])).status.success());
    }
    let out = counterarg(
        dir.path(),
        &stub_args(&[
            "--set",
            "generation.train.max_steps=10",
            "--set",
            "grid.max_eval_examples=4",
            "eval-grid",
            "--rows",
            "baseline,argSch+big5",
        ]),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("artifacts/grid/grid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "ID,Type,Features,BLEU,RougeL,PPL");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,Baseline,None,"));
    assert!(lines[2].starts_with("8,Val+Struct,argSch+big5,"));
    for row in ["row-01", "row-08"] {
        for f in ["metrics.json", "generations.jsonl", "checkpoint/generator.json"] {
            assert!(dir.path().join("artifacts/grid").join(row).join(f).exists());
        }
    }
}

#[test]
fn unknown_command_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = counterarg(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = counterarg(dir.path(), &["--set", "paths.corpus=\"/no/such/file.jsonl\"", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("paths.corpus"));
    let out = counterarg(dir.path(), &["--set", "generation.beam_wdth=3", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beam_wdth"));
}

#[test]
fn missing_prerequisite_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = counterarg(dir.path(), &stub_args(&["train-generator"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("annotate"));
}
