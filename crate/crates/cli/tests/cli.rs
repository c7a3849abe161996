use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set", "image_size=16",
    "--set", "max_diameter=11",
    "--set", "widths=2,2",
    "--epochs", "1",
    "--batch-size", "8",
];

fn gdnet(args: &[&str], extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdnet"))
        .args(args)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let d = dir.to_str().unwrap();
    let data = format!("{d}/dataset.bin");
    ok(gdnet(&["gen-data", "--seed", "3", "--n-samples", "40", "--out", d], SMALL));
    let stdout = ok(gdnet(&["train", "--seed", "3", "--data", &data, "--out", d], SMALL));
    assert!(stdout.contains("weights.bin") && stdout.contains("loss.csv"));
    ok(gdnet(&["eval", "--data", &data, "--out", d], SMALL));
    ["dataset.bin", "manifest.csv", "weights.bin", "norm.csv", "loss.csv", "metrics.csv", "scores.csv", "roc.csv"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn pipeline_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name} differs");
    }
    let metrics = String::from_utf8(first[5].1.clone()).unwrap();
    assert!(metrics.starts_with("set,n,tp,fp,tn,fn,accuracy,precision,sensitivity,auc\ntest,40,"));
    let echo = std::fs::read_to_string(a.path().join("resolved_config.txt")).unwrap();
    assert!(echo.contains("command = eval") && echo.contains("widths = 2,2"));
}

#[test]
fn eval_with_mismatched_architecture_fails_with_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let data = format!("{d}/dataset.bin");
    ok(gdnet(&["gen-data", "--n-samples", "20", "--out", d], SMALL));
    ok(gdnet(&["train", "--data", &data, "--out", d], SMALL));
    let out = gdnet(
        &["eval", "--data", &data, "--out", d, "--set", "widths=2,3"],
        &["--set", "image_size=16", "--set", "max_diameter=11"],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape inconsistency"));
}

#[test]
fn cv_writes_fold_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let data = format!("{d}/dataset.bin");
    ok(gdnet(&["gen-data", "--n-samples", "30", "--out", d], SMALL));
    let stdout = ok(gdnet(&["cv", "--k", "3", "--data", &data, "--out", d], SMALL));
    for f in ["cv_metrics.csv", "cv_scores.csv", "cv_folds.csv", "fold3_loss.csv"] {
        assert!(stdout.contains(f), "{f} not listed");
    }
    let metrics = std::fs::read_to_string(dir.path().join("cv_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 + 2);
}

#[test]
fn gradcheck_passes_on_fresh_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = gdnet(
        &["gradcheck", "--seed", "77", "--out", d, "--set", "instances=3", "--set", "network_instances=1"],
        &["--set", "image_size=8", "--set", "max_diameter=4", "--set", "widths=2,2,2,2,2"],
    );
    let stdout = ok(out);
    assert!(stdout.contains("f32: max relative error") && stdout.contains("f64: max relative error"));
    let csv = std::fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn usage_and_io_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let unknown = gdnet(&["train", "--out", d, "--set", "colour=red"], &[]);
    assert_eq!(unknown.status.code(), Some(2));
    let missing = gdnet(&["train", "--out", d, "--data", &format!("{d}/nope.bin")], &[]);
    assert_eq!(missing.status.code(), Some(3));
    let no_data = gdnet(&["eval", "--out", d], &[]);
    assert_eq!(no_data.status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epochs = 2\nfrobnicate = 1\n").unwrap();
    let bad = gdnet(&["train", "--out", d, "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("frobnicate"));
}
