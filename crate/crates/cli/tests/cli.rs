//! End-to-end tests of the command-line interface: exit codes, record
//! layout, reruns, reports.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_distillab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn distillab")
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn base_config(out_dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "pipeline": "scratch",
        "dataset": {
            "kind": "gaussian_mixture",
            "classes": 3, "dims": 2,
            "per_class_train": 15, "per_class_test": 15,
            "spread": 0.5, "seed": 7
        },
        "student": {"family": "mlp", "depth_factor": 1, "width_factor": 1},
        "schedule": {
            "total_epochs": 3,
            "mode": {"kind": "step", "drop_every": 2},
            "initial_lr": 0.1, "drop_factor": 0.2,
            "momentum": 0.9, "nesterov": false, "weight_decay": 0.0
        },
        "batch_size": 16,
        "seeds": [1, 2],
        "out_dir": out_dir.to_string_lossy()
    })
}

#[test]
fn scratch_run_writes_layout_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let cfg = write_config(dir.path(), "cfg.json", base_config(&out));

    let output = run(&["distill", "--config", &cfg]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let metrics_path = out.join("scratch").join("1").join("stage-0").join("metrics.jsonl");
    assert!(metrics_path.is_file());
    assert!(out.join("scratch").join("1").join("stage-0").join("model.ckpt").is_file());
    assert!(out.join("scratch").join("record.json").is_file());
    assert!(out.join("summary.csv").is_file());

    // Config re-emission parses back to an equal config.
    let emitted = std::fs::read_to_string(out.join("config.json")).unwrap();
    let original = std::fs::read_to_string(&cfg).unwrap();
    let a: serde_json::Value = serde_json::from_str(&emitted).unwrap();
    let b: serde_json::Value = serde_json::from_str(&original).unwrap();
    assert_eq!(a["pipeline"], b["pipeline"]);
    assert_eq!(a["dataset"], b["dataset"]);
    assert_eq!(a["schedule"], b["schedule"]);

    // Rerun from the emitted config reproduces metrics byte for byte.
    let first = std::fs::read(&metrics_path).unwrap();
    let emitted_cfg = out.join("config.json").to_string_lossy().into_owned();
    let output = run(&["distill", "--config", &emitted_cfg]);
    assert!(output.status.success());
    assert_eq!(std::fs::read(&metrics_path).unwrap(), first);
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(&dir.path().join("runs"));
    cfg["typo_key"] = serde_json::json!(true);
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("typo_key"), "{stderr}");
}

#[test]
fn missing_dataset_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(&dir.path().join("runs"));
    cfg.as_object_mut().unwrap().remove("dataset");
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "{stderr}");
}

#[test]
fn train_teacher_shrunk_schedule_drops_at_10_20_30() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("teachers");
    let mut cfg = base_config(&out);
    cfg["teacher"] = serde_json::json!({"family": "mlp", "depth_factor": 1, "width_factor": 2});
    cfg["teacher_schedule"] = serde_json::json!({
        "total_epochs": 60,
        "mode": {"kind": "step", "drop_every": 20},
        "initial_lr": 0.1, "drop_factor": 0.2,
        "momentum": 0.9, "nesterov": false, "weight_decay": 0.0
    });
    cfg["n_short"] = serde_json::json!(35);
    cfg["seeds"] = serde_json::json!([4]);
    let path = write_config(dir.path(), "cfg.json", cfg);

    let output = run(&["train-teacher", "--config", &path]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(stdout.contains("epochs=35"), "{stdout}");

    let metrics = std::fs::read_to_string(out.join("teacher-4.metrics.jsonl")).unwrap();
    let lrs: Vec<f64> = metrics
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["lr"].as_f64().unwrap())
        .collect();
    assert_eq!(lrs.len(), 35);
    for (epoch, pair) in lrs.windows(2).enumerate() {
        let dropped = pair[1] < pair[0];
        let expect_drop = [9usize, 19, 29].contains(&epoch); // drop lands at 10, 20, 30
        assert_eq!(dropped, expect_drop, "epoch {}", epoch + 1);
    }

    // Deterministic rerun: same digest line.
    let digest = stdout.split("digest=").nth(1).unwrap().split_whitespace().next().unwrap().to_string();
    let output = run(&["train-teacher", "--config", &path]);
    let stdout2 = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(stdout2.contains(&digest), "digest changed across reruns");
}

#[test]
fn eskd_pipeline_report_has_reference_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut cfg = base_config(&out);
    cfg["pipeline"] = serde_json::json!("eskd");
    cfg["teacher"] = serde_json::json!({"family": "mlp", "depth_factor": 1, "width_factor": 2});
    cfg["distill"] = serde_json::json!({"alpha": 0.9, "temperature": 4.0, "at_beta": 0.0, "switch_epoch": null});
    let path = write_config(dir.path(), "cfg.json", cfg);

    let output = run(&["distill", "--config", &path]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let out_str = out.to_string_lossy().into_owned();
    let output = run(&["report", &out_str, "--kind", "eskd_table"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let table = std::fs::read_to_string(out.join("eskd_table.csv")).unwrap();
    assert!(
        table.starts_with("Teacher,Top-1 Error,CE (Train),KD (Train),KD (Test)\n"),
        "{table}"
    );
    assert!(table.contains("(ES KD)"));

    // Curve report is byte-stable across repeated invocations.
    let output = run(&["report", &out_str, "--kind", "train_curve"]);
    assert!(output.status.success());
    let svg1 = std::fs::read(out.join("train_curve.svg")).unwrap();
    let output = run(&["report", &out_str, "--kind", "train_curve"]);
    assert!(output.status.success());
    assert_eq!(std::fs::read(out.join("train_curve.svg")).unwrap(), svg1);
}

#[test]
fn report_on_incomplete_record_fails_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out_str = dir.path().to_string_lossy().into_owned();
    let output = run(&["report", &out_str, "--kind", "sweep_curve"]);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("sweep.json"), "{stderr}");
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut cfg = base_config(&out);
    cfg["seeds"] = serde_json::json!([10]);
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path, "--seed-offset", "5"]);
    assert!(output.status.success());
    assert!(out.join("scratch").join("15").is_dir());
}

#[test]
fn sequential_config_creates_one_directory_per_generation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut cfg = base_config(&out);
    cfg["pipeline"] = serde_json::json!("sequential_kd");
    cfg["generations"] = serde_json::json!(2);
    cfg["seeds"] = serde_json::json!([3]);
    cfg["distill"] = serde_json::json!({"alpha": 0.9, "temperature": 4.0, "at_beta": 0.0, "switch_epoch": null});
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("sequential").join("3").join("stage-0").join("model.ckpt").is_file());
    assert!(out.join("sequential").join("3").join("stage-1").join("model.ckpt").is_file());
    assert!(!out.join("sequential").join("3").join("stage-2").exists());
}

#[test]
fn summary_csv_rows_match_metrics_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let path = write_config(dir.path(), "cfg.json", base_config(&out));
    let output = run(&["distill", "--config", &path]);
    assert!(output.status.success());

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rows = summary.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let top1_col = header.iter().position(|&h| h == "final_top1").unwrap();
    let seed_col = header.iter().position(|&h| h == "seed").unwrap();
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let seed = fields[seed_col];
        let top1: f64 = fields[top1_col].parse().unwrap();
        // The stored final error equals the last epoch's test_top1.
        let metrics = std::fs::read_to_string(
            out.join("scratch").join(seed).join("stage-0").join("metrics.jsonl"),
        )
        .unwrap();
        let last: serde_json::Value =
            serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
        assert_eq!(top1, last["test_top1"].as_f64().unwrap(), "seed {seed}");
    }
}

#[test]
fn sweep_reports_curve_with_whiskered_medians() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut cfg = base_config(&out);
    cfg["pipeline"] = serde_json::json!("sweep");
    cfg["teacher_ladder"] = serde_json::json!([
        {"family": "mlp", "depth_factor": 1, "width_factor": 1},
        {"family": "mlp", "depth_factor": 1, "width_factor": 2},
        {"family": "mlp", "depth_factor": 1, "width_factor": 3}
    ]);
    cfg["distill"] = serde_json::json!({"alpha": 0.9, "temperature": 4.0, "at_beta": 0.0, "switch_epoch": null});
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path, "--jobs", "2"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let out_str = out.to_string_lossy().into_owned();
    let output = run(&["report", &out_str, "--kind", "sweep_curve"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("sweep_curve.csv")).unwrap();
    assert!(csv.starts_with("rung,teacher_params,"), "{csv}");
    assert_eq!(csv.lines().count(), 4); // header + 3 rungs
    let svg = std::fs::read(out.join("sweep_curve.svg")).unwrap();
    let output = run(&["report", &out_str, "--kind", "sweep_curve"]);
    assert!(output.status.success());
    assert_eq!(std::fs::read(out.join("sweep_curve.svg")).unwrap(), svg);
}

#[test]
fn sequential_table_has_reference_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let mut cfg = base_config(&out);
    cfg["pipeline"] = serde_json::json!("sequential_kd");
    cfg["generations"] = serde_json::json!(2);
    cfg["seeds"] = serde_json::json!([1]);
    cfg["distill"] = serde_json::json!({"alpha": 0.9, "temperature": 4.0, "at_beta": 0.0, "switch_epoch": null});
    let path = write_config(dir.path(), "cfg.json", cfg);
    let output = run(&["distill", "--config", &path]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let out_str = out.to_string_lossy().into_owned();
    let output = run(&["report", &out_str, "--kind", "sequential_table"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let table = std::fs::read_to_string(out.join("sequential_table.csv")).unwrap();
    assert!(
        table.starts_with(
            "Model,# Params,Method,Last Gen. Err.,All Gen. Ensemble Err.,Scratch Err.,Scratch Ensemble Err.\n"
        ),
        "{table}"
    );
}

#[test]
fn verify_passes_on_fresh_checkout() {
    let output = run(&["verify"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "{stdout}");
    assert!(stdout.contains("checks passed"), "{stdout}");
    assert!(stdout.contains("[pass]"), "{stdout}");
    assert!(!stdout.contains("[FAIL]"), "{stdout}");
}
