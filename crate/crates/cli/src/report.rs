//! Report generation: CSV tables with the reference column names and
//! deterministic SVG curves, all pure functions of a record directory.

use std::path::{Path, PathBuf};

use distillab_core::orchestrator::{load_record, EskdComparison, SequentialRecord, SweepRecord};
use distillab_core::{Error, ModelSpec, Result};

use crate::svg::{line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    SweepCurve,
    TrainCurve,
    EskdTable,
    SequentialTable,
}

impl std::str::FromStr for ReportKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ReportKind> {
        match s {
            "sweep_curve" => Ok(ReportKind::SweepCurve),
            "train_curve" => Ok(ReportKind::TrainCurve),
            "eskd_table" => Ok(ReportKind::EskdTable),
            "sequential_table" => Ok(ReportKind::SequentialTable),
            other => Err(Error::parameter(format!(
                "unknown report kind {other}; have sweep_curve, train_curve, eskd_table, sequential_table"
            ))),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::report(format!("missing {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_out(out_dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn opt_median(values: Vec<Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect::<Option<Vec<_>>>()?;
    if v.is_empty() {
        return None;
    }
    Some(median(&mut v))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Teacher-capacity sweep: student error (median with std whiskers) and
/// teacher error against teacher parameter count.
pub fn sweep_curve(record_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let sweep: SweepRecord = read_json(&record_dir.join("sweep.json"))?;
    if sweep.rungs.is_empty() {
        return Err(Error::report("sweep.json lists no rungs".to_string()));
    }
    let mut csv = String::from(
        "rung,teacher_params,teacher_top1_median,student_top1_median,student_top1_mean,student_top1_std,train_kd_error_median,test_kd_median\n",
    );
    for r in &sweep.rungs {
        csv.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6}\n",
            r.rung,
            r.teacher_params,
            r.teacher_top1.median,
            r.student_top1.median,
            r.student_top1.mean,
            r.student_top1.std,
            r.train_kd_error.median,
            r.test_kd_loss.median,
        ));
    }
    let student = Series {
        label: "student top-1 (median)".to_string(),
        points: sweep.rungs.iter().map(|r| (r.teacher_params as f64, r.student_top1.median)).collect(),
        whiskers: sweep.rungs.iter().map(|r| r.student_top1.std).collect(),
    };
    let teacher = Series {
        label: "teacher top-1 (median)".to_string(),
        points: sweep.rungs.iter().map(|r| (r.teacher_params as f64, r.teacher_top1.median)).collect(),
        whiskers: vec![],
    };
    let svg = line_chart(
        "student error vs teacher capacity",
        "teacher parameters",
        "top-1 error (%)",
        &[student, teacher],
    );
    Ok(vec![
        write_out(out_dir, "sweep_curve.csv", &csv)?,
        write_out(out_dir, "sweep_curve.svg", &svg)?,
    ])
}

/// Per-epoch test error curves, one series per pipeline (median across seeds).
pub fn train_curve(record_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut pipelines: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(record_dir)
        .map_err(|e| Error::report(format!("cannot read {}: {e}", record_dir.display())))?
    {
        let entry = entry.map_err(Error::Io)?;
        if entry.path().join("record.json").is_file() {
            pipelines.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    pipelines.sort();
    if pipelines.is_empty() {
        return Err(Error::report(format!(
            "no record.json under {}",
            record_dir.display()
        )));
    }

    let mut csv = String::from("pipeline,epoch,test_top1_median\n");
    let mut series = Vec::new();
    for name in &pipelines {
        let record = load_record(record_dir, name)?;
        let epochs = record.runs[0].stages.last().expect("stages").log.epochs.len();
        let mut points = Vec::with_capacity(epochs);
        for e in 0..epochs {
            let mut vals: Vec<f64> = record
                .runs
                .iter()
                .map(|r| r.stages.last().expect("stages").log.epochs[e].test_top1)
                .collect();
            let m = median(&mut vals);
            csv.push_str(&format!("{name},{e},{m:.4}\n"));
            points.push((e as f64, m));
        }
        series.push(Series { label: name.clone(), points, whiskers: vec![] });
    }
    let svg = line_chart("test error vs epoch", "epoch", "top-1 error (%)", &series);
    Ok(vec![
        write_out(out_dir, "train_curve.csv", &csv)?,
        write_out(out_dir, "train_curve.svg", &svg)?,
    ])
}

/// The early-stop comparison table with the reference column names.
pub fn eskd_table(record_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cmp: EskdComparison = read_json(&record_dir.join("eskd_comparison.json"))?;
    if cmp.rows.is_empty() {
        return Err(Error::report("eskd_comparison.json has no rows".to_string()));
    }
    let teacher_label = load_record(record_dir, "full_kd")
        .ok()
        .and_then(|r| r.teachers.first().map(|t| t.id.clone()))
        .unwrap_or_else(|| "teacher".to_string());

    let mut csv = String::from("Teacher,Top-1 Error,CE (Train),KD (Train),KD (Test)\n");
    let full = (
        opt_median(cmp.rows.iter().map(|r| Some(r.full.top1)).collect()),
        opt_median(cmp.rows.iter().map(|r| Some(r.full.train_ce)).collect()),
        opt_median(cmp.rows.iter().map(|r| r.full.train_kd).collect()),
        opt_median(cmp.rows.iter().map(|r| r.full.test_kd).collect()),
    );
    let eskd = (
        opt_median(cmp.rows.iter().map(|r| Some(r.eskd.top1)).collect()),
        opt_median(cmp.rows.iter().map(|r| Some(r.eskd.train_ce)).collect()),
        opt_median(cmp.rows.iter().map(|r| r.eskd.train_kd).collect()),
        opt_median(cmp.rows.iter().map(|r| r.eskd.test_kd).collect()),
    );
    csv.push_str(&format!(
        "{teacher_label},{},{},{},{}\n",
        fmt_opt(full.0),
        fmt_opt(full.1),
        fmt_opt(full.2),
        fmt_opt(full.3)
    ));
    csv.push_str(&format!(
        "{teacher_label} (ES KD),{},{},{},{}\n",
        fmt_opt(eskd.0),
        fmt_opt(eskd.1),
        fmt_opt(eskd.2),
        fmt_opt(eskd.3)
    ));
    Ok(vec![write_out(out_dir, "eskd_table.csv", &csv)?])
}

/// The sequential-chain table with the reference column names.
pub fn sequential_table(record_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let seq: SequentialRecord = read_json(&record_dir.join("sequential.json"))?;
    let chain = load_record(record_dir, "sequential")?;
    let spec: ModelSpec = serde_json::from_value(
        chain.descriptor["specs"]
            .get(0)
            .cloned()
            .ok_or_else(|| Error::report("sequential record lacks a chain spec".to_string()))?,
    )?;
    let distill: distillab_core::DistillConfig = serde_json::from_value(chain.descriptor["distill"].clone())
        .unwrap_or_default();
    let method = if distill.at_beta > 0.0 && spec.family == distillab_core::Family::Convnet {
        "AT+KD"
    } else {
        "KD"
    };
    let model_label = format!(
        "{:?}-d{}w{}",
        spec.family, spec.depth_factor, spec.width_factor
    )
    .to_lowercase();
    let params = spec.parameter_count()?;

    let mut csv = String::from(
        "Model,# Params,Method,Last Gen. Err.,All Gen. Ensemble Err.,Scratch Err.,Scratch Ensemble Err.\n",
    );
    csv.push_str(&format!(
        "{model_label},{params},{method},{:.4},{:.4},{:.4},{:.4}\n",
        seq.last_gen.median, seq.all_gen_ensemble.median, seq.scratch.median, seq.scratch_ensemble.median
    ));
    Ok(vec![write_out(out_dir, "sequential_table.csv", &csv)?])
}

pub fn run(record_dir: &Path, kind: ReportKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        ReportKind::SweepCurve => sweep_curve(record_dir, out_dir),
        ReportKind::TrainCurve => train_curve(record_dir, out_dir),
        ReportKind::EskdTable => eskd_table(record_dir, out_dir),
        ReportKind::SequentialTable => sequential_table(record_dir, out_dir),
    }
}
