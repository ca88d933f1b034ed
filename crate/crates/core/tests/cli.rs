use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn popcurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popcurve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = popcurve(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(out: &Path, per_class: &str, seed: &str) {
    ok(&["synth", "--out", p(out), "--per-class", per_class, "--seed", seed]);
}

fn data_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn label_counts(rows: &[csv::StringRecord], col: usize) -> std::collections::BTreeMap<String, usize> {
    let mut m = std::collections::BTreeMap::new();
    for r in rows {
        *m.entry(r[col].to_string()).or_default() += 1;
    }
    m
}

#[test]
fn synth_per_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "100", "1");
    let rows = data_rows(&dir.path().join("labels.csv"));
    assert_eq!(rows.len(), 700);
    assert!(label_counts(&rows, 3).values().all(|&n| n == 100));
}

#[test]
fn synth_table1_mix() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(dir.path()), "--table1-mix", "--length", "50"]);
    let counts = label_counts(&data_rows(&dir.path().join("labels.csv")), 3);
    let want = [
        ("exponential_growth", 29),
        ("capped_growth", 75),
        ("dying", 420),
        ("oscillation", 69),
        ("constant", 162),
        ("gaussian", 169),
        ("outlier", 47),
    ];
    for (label, n) in want {
        assert_eq!(counts.get(label), Some(&n), "{label}: {counts:?}");
    }
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "3", "11");
    synth(b.path(), "3", "11");
    assert_eq!(
        fs::read(a.path().join("labels.csv")).unwrap(),
        fs::read(b.path().join("labels.csv")).unwrap()
    );
    for entry in fs::read_dir(a.path().join("series")).unwrap() {
        let path = entry.unwrap().path();
        let twin = b.path().join("series").join(path.file_name().unwrap());
        assert_eq!(fs::read(&path).unwrap(), fs::read(twin).unwrap());
    }
}

#[test]
fn classify_conserves_series() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth(&corpus, "4", "2");
    let out = dir.path().join("out");
    ok(&["classify", p(&corpus.join("series")), "--out", p(&out)]);
    let rows = data_rows(&out.join("classifications.csv"));
    assert_eq!(rows.len(), 28);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("classifications.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 28);
    assert!(rows.iter().all(|r| &r[0] == "series"));
}

#[test]
fn constant_file_classifies_constant() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    let mut text = String::from("t,wolf,hare\n");
    for t in 0..400 {
        text.push_str(&format!("{t},120,7\n"));
    }
    fs::write(input.join("flat.csv"), text).unwrap();
    let out = dir.path().join("out");
    ok(&["classify", p(&input), "--out", p(&out)]);
    let rows = data_rows(&out.join("classifications.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[3] == "constant"));
}

#[test]
fn strict_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    let mut good = String::from("t,a\n");
    for t in 0..400 {
        good.push_str(&format!("{t},{}\n", t + 1));
    }
    fs::write(input.join("good.csv"), good).unwrap();
    fs::write(input.join("bad.csv"), "t,a\n0,1\n1,not-a-number\n").unwrap();
    let out = dir.path().join("out");

    let lenient = popcurve(&["classify", p(&input), "--out", p(&out)]);
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("bad.csv"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["skipped"].as_array().unwrap().len(), 1);

    let strict = popcurve(&["classify", p(&input), "--out", p(&out), "--strict"]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(popcurve(&["validate"]).status.code(), Some(1));
    assert_eq!(
        popcurve(&["validate", ".", "--out", "x", "--split-ratio", "1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(popcurve(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_needs_enough_series() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth(&corpus, "1", "3");
    let out = popcurve(&["validate", p(&corpus.join("series")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth(&corpus, "5", "4");
    let out = dir.path().join("val");
    ok(&[
        "validate", p(&corpus.join("series")), "--out", p(&out), "--cluster-threshold", "2",
        "--silhouette", "--export-distances", "--plots",
    ]);
    for name in [
        "report.json", "confusion.csv", "clusters.csv", "assignments.csv", "dendrogram.json",
        "medoids.json", "run_manifest.json", "distances.csv", "silhouette.csv",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    assert!(fs::read_dir(out.join("plots")).unwrap().count() > 0);

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let report = &report["report"];
    assert_eq!(report["n_series"], 35);
    assert_eq!(
        report["train_size"].as_u64().unwrap() + report["test_size"].as_u64().unwrap(),
        35
    );
    let confusion = data_rows(&out.join("confusion.csv"));
    let total: u64 = confusion.iter().map(|r| r[8].parse::<u64>().unwrap()).sum();
    assert_eq!(total, report["test_size"].as_u64().unwrap());

    let pred = dir.path().join("pred");
    ok(&[
        "predict", p(&corpus.join("series")), "--medoids", p(&out.join("medoids.json")),
        "--out", p(&pred),
    ]);
    assert_eq!(data_rows(&pred.join("predictions.csv")).len(), 35);
}

#[test]
fn zero_cut_height_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth(&corpus, "4", "5");
    let out = dir.path().join("val");
    ok(&["validate", p(&corpus.join("series")), "--out", p(&out), "--cluster-threshold", "0"]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let report = &report["report"];
    // every non-constant training series is its own cluster
    assert_eq!(report["cluster_count"], report["clustered_size"]);
}
