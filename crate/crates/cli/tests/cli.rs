use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn qcgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcgen"))
        .args(args)
        .output()
        .expect("qcgen runs")
}

fn ok(args: &[&str]) -> String {
    let out = qcgen(args);
    assert!(
        out.status.success(),
        "qcgen {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "qasm"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Fraction printed on the `real fraction:` summary line.
fn real_fraction(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("real fraction:")).expect("summary line");
    line.split_whitespace().nth(2).unwrap().parse().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(qcgen(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qcgen(&["generate"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = qcgen(&["validate", "/nonexistent/qcgen/dir"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bundled_corpus_validates() {
    let stdout = ok(&["validate", s(&repo().join("corpus/synthetic"))]);
    assert!(stdout.contains("100.0% valid"), "{stdout}");
}

#[test]
fn selftest_passes() {
    ok(&["selftest"]);
}

#[test]
fn desk_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let config = repo().join("configs/desk.toml");
    let cfg = s(&config);
    let corpus = t.join("corpus");
    let stats = t.join("stats.json");
    let model = t.join("generator.ckpt");

    ok(&["synth-corpus", "--out", s(&corpus), "--count", "140"]);
    ok(&["--config", cfg, "ingest", s(&corpus), "--out", s(&stats)]);
    assert!(t.join("vocab.json").exists());
    ok(&["--config", cfg, "train-generator", s(&stats), "--out", s(&model)]);

    let gen_a = t.join("gen_a");
    let gen_b = t.join("gen_b");
    for dir in [&gen_a, &gen_b] {
        ok(&["--config", cfg, "--seed", "3", "generate", "--model", s(&model), "--count", "20", "--out", s(dir)]);
    }
    assert_eq!(dir_bytes(&gen_a).len(), 20);
    assert_eq!(dir_bytes(&gen_a), dir_bytes(&gen_b), "same seed, different output");
    assert!(gen_a.join("manifest.json").exists() && gen_a.join("timings.json").exists());
    assert!(ok(&["validate", s(&gen_a)]).contains("100.0% valid"));

    let random = t.join("random");
    ok(&["--config", cfg, "random", "--stats", s(&stats), "--count", "140", "--out", s(&random)]);
    assert_eq!(dir_bytes(&random).len(), 140);

    let clf = t.join("classifier.ckpt");
    ok(&[
        "--config", cfg, "train-classifier", "--real", s(&corpus), "--random", s(&random), "--out", s(&clf),
    ]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.join("eval_report.json")).unwrap()).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() >= 0.9, "{report}");

    let on_random = ok(&["classify", "--model", s(&clf), s(&random)]);
    assert!(real_fraction(&on_random) < 0.1, "{on_random}");
    let on_generated = ok(&["classify", "--model", s(&clf), s(&gen_a)]);
    assert!(real_fraction(&on_generated) > 0.5, "{on_generated}");

    let metrics = t.join("metrics.csv");
    ok(&[
        "analyze",
        &format!("real:{}", s(&corpus)),
        &format!("random:{}", s(&random)),
        &format!("ketgpt:{}", s(&gen_a)),
        "--out",
        s(&metrics),
    ]);
    let rows = fs::read_to_string(&metrics).unwrap().lines().count();
    assert_eq!(rows, 1 + 140 + 140 + 20);

    let (c1, c2) = (t.join("c1/clusters.csv"), t.join("c2/clusters.csv"));
    for out in [&c1, &c2] {
        ok(&["--config", cfg, "cluster", s(&metrics), "--out", s(out)]);
    }
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
    assert_eq!(
        fs::read(t.join("c1/clusters_summary.json")).unwrap(),
        fs::read(t.join("c2/clusters_summary.json")).unwrap()
    );
}
