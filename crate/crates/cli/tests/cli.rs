//! End-to-end smoke tests for the binary: exit codes, file outputs and the
//! documented pipeline wiring.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vigil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vigil"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_status(out: &Output, want: i32, context: &str) {
    let got = out.status.code().expect("no signal");
    assert_eq!(
        got,
        want,
        "{context}: expected exit {want}, got {got}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn help_and_version_exit_zero() {
    let help = vigil(&["--help"]);
    assert_status(&help, 0, "--help");
    assert!(String::from_utf8_lossy(&help.stdout).contains("Usage"));
    let version = vigil(&["--version"]);
    assert_status(&version, 0, "--version");

    let sub_help = vigil(&["score", "--help"]);
    assert_status(&sub_help, 0, "score --help");
    assert!(String::from_utf8_lossy(&sub_help.stdout).contains("--fixed-coeffs"));
}

#[test]
fn unknown_flags_and_missing_arguments_exit_one() {
    assert_status(&vigil(&["simulate", "--bogus"]), 1, "unknown flag");
    assert_status(&vigil(&["frobnicate"]), 1, "unknown subcommand");
    assert_status(&vigil(&["train"]), 1, "missing required args");
}

#[test]
fn score_requires_exactly_one_coefficient_source() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.json");
    fs::write(
        &events,
        r#"{"id":"one","num_frames":10,"fps":30.0,"events":[]}"#,
    )
    .unwrap();
    let out_csv = dir.path().join("c.csv");
    let neither = vigil(&[
        "score",
        "--events",
        path_str(&events),
        "--out",
        path_str(&out_csv),
    ]);
    assert_status(&neither, 1, "neither coefficient source");
    let both = vigil(&[
        "score",
        "--events",
        path_str(&events),
        "--checkpoint",
        "x.json",
        "--fixed-coeffs",
        "--out",
        path_str(&out_csv),
    ]);
    assert_status(&both, 1, "both coefficient sources");
}

#[test]
fn missing_input_file_exits_two() {
    let out = vigil(&[
        "score",
        "--events",
        "/nonexistent/events.json",
        "--fixed-coeffs",
        "--out",
        "/tmp/never-written.csv",
    ]);
    assert_status(&out, 2, "missing events file");
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/events.json"));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"format_version":1,"hiden":64}"#).unwrap();
    let out = vigil(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&dir.path().join("ds")),
    ]);
    assert_status(&out, 2, "unknown config key");
}

#[test]
fn impossible_gradcheck_tolerance_exits_three() {
    let out = vigil(&[
        "gradcheck",
        "--draws",
        "1",
        "--frames",
        "12",
        "--rel-tol",
        "1e-14",
        "--abs-tol",
        "1e-16",
    ]);
    assert_status(&out, 3, "failing gradient check");
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn fixed_coefficient_scoring_of_an_empty_track_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("empty.json");
    fs::write(
        &events,
        r#"{"id":"empty","num_frames":40,"fps":30.0,"events":[]}"#,
    )
    .unwrap();
    let csv = dir.path().join("empty.csv");
    let out = vigil(&[
        "score",
        "--events",
        path_str(&events),
        "--fixed-coeffs",
        "--out",
        path_str(&csv),
    ]);
    assert_status(&out, 0, "fixed-coeffs scoring");
    let text = fs::read_to_string(&csv).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0, "raw at {line}");
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0, "score at {line}");
        rows += 1;
    }
    assert_eq!(rows, 40);
}

#[test]
fn pipeline_simulate_train_score_eval_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let out = vigil(&[
        "simulate",
        "--out",
        path_str(&ds),
        "--seed",
        "21",
        "--num-sequences",
        "5",
        "--frames",
        "160",
        "--threads",
        "2",
    ]);
    assert_status(&out, 0, "simulate");
    assert!(ds.join("dataset.json").is_file());
    assert!(ds.join("anchors.json").is_file());

    let ckpt = dir.path().join("ckpt");
    let out = vigil(&[
        "train",
        "--data",
        path_str(&ds),
        "--out",
        path_str(&ckpt),
        "--seed",
        "21",
        "--epochs",
        "2",
    ]);
    assert_status(&out, 0, "train");
    assert!(ckpt.join("checkpoint.json").is_file());
    assert!(ckpt.join("train_report.json").is_file());

    let pred = dir.path().join("pred");
    for i in 0..5 {
        let id = format!("synth-{i:04}");
        let out = vigil(&[
            "score",
            "--events",
            path_str(&ds.join(format!("{id}.events.json"))),
            "--checkpoint",
            path_str(&ckpt.join("checkpoint.json")),
            "--features",
            path_str(&ds.join(format!("{id}.features.json"))),
            "--out",
            path_str(&pred.join(format!("{id}.csv"))),
        ]);
        assert_status(&out, 0, &format!("score {id}"));
    }

    let metrics = dir.path().join("metrics.json");
    let per_seq = dir.path().join("per_sequence.csv");
    let out = vigil(&[
        "eval",
        "--data",
        path_str(&ds),
        "--curves",
        path_str(&pred),
        "--out",
        path_str(&metrics),
        "--per-sequence",
        path_str(&per_seq),
        "--threads",
        "2",
    ]);
    assert_status(&out, 0, "eval");
    let table = fs::read_to_string(&per_seq).unwrap();
    assert!(table.starts_with("id,mse,mae,r2,diff_mse,pred_segments,gt_segments\n"));
    assert_eq!(table.lines().count(), 6);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["sequences"].as_array().unwrap().len(), 5);
    assert!(report["pooled"]["mse"].as_f64().unwrap().is_finite());
    assert!(report["detection"]["per_iou"].as_array().unwrap().len() == 5);

    let analysis = dir.path().join("analysis");
    let out = vigil(&[
        "analyze",
        "--curve",
        path_str(&pred.join("synth-0000.csv")),
        "--out",
        path_str(&analysis),
        "--max-lag",
        "40",
        "--svg",
    ]);
    assert_status(&out, 0, "analyze");
    let ac = fs::read_to_string(analysis.join("autocorrelation.csv")).unwrap();
    assert!(ac.starts_with("lag,autocorrelation\n0,1.00000000e0\n"));
    assert!(analysis.join("cumulative.csv").is_file());
    assert!(fs::read_to_string(analysis.join("curve.svg"))
        .unwrap()
        .contains("<polyline"));

    let anchors_dir = dir.path().join("anchors");
    let out = vigil(&[
        "anchors",
        "--bank",
        path_str(&ds.join("anchors.json")),
        "--out",
        path_str(&anchors_dir),
    ]);
    assert_status(&out, 0, "anchors");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(anchors_dir.join("stats.json")).unwrap())
            .unwrap();
    assert_eq!(stats["count"].as_u64().unwrap(), 110);
}

#[test]
fn rate_scale_flags_produce_low_and_high_frequency_variants() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    for (name, scale) in [("low", "0.3"), ("high", "3")] {
        let ds = dir.path().join(name);
        let out = vigil(&[
            "simulate",
            "--out",
            path_str(&ds),
            "--seed",
            "13",
            "--num-sequences",
            "6",
            "--frames",
            "300",
            "--rate-scale",
            scale,
        ]);
        assert_status(&out, 0, "simulate variant");
        let mut events = 0usize;
        for i in 0..6 {
            let text =
                fs::read_to_string(ds.join(format!("synth-{i:04}.events.json"))).unwrap();
            let seq: serde_json::Value = serde_json::from_str(&text).unwrap();
            events += seq["events"].as_array().unwrap().len();
        }
        counts.push(events);
    }
    assert!(
        counts[1] > 3 * counts[0],
        "high-frequency variant ({}) should far exceed low ({})",
        counts[1],
        counts[0]
    );
    let rejected = vigil(&[
        "simulate",
        "--out",
        path_str(&dir.path().join("bad")),
        "--rate-scale",
        "1e9",
    ]);
    assert_status(&rejected, 2, "absurd rate scale");
}

#[test]
fn evaluating_the_references_against_themselves_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let out = vigil(&[
        "simulate",
        "--out",
        path_str(&ds),
        "--seed",
        "33",
        "--num-sequences",
        "3",
        "--frames",
        "200",
    ]);
    assert_status(&out, 0, "simulate");

    let pred = dir.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    for i in 0..3 {
        let id = format!("synth-{i:04}");
        fs::copy(ds.join(format!("{id}.gt.csv")), pred.join(format!("{id}.csv"))).unwrap();
    }
    let metrics = dir.path().join("metrics.json");
    let out = vigil(&[
        "eval",
        "--data",
        path_str(&ds),
        "--curves",
        path_str(&pred),
        "--out",
        path_str(&metrics),
    ]);
    assert_status(&out, 0, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["pooled"]["mse"].as_f64().unwrap(), 0.0);
    assert_eq!(report["pooled"]["r2"].as_f64().unwrap(), 1.0);
    assert_eq!(report["detection"]["mean_map"].as_f64().unwrap(), 1.0);
}
