//! Experiment records and their on-disk layout.
//!
//! Each pipeline writes
//!   <out>/<pipeline>/<seed>/stage-<i>/metrics.jsonl
//!   <out>/<pipeline>/<seed>/stage-<i>/model.ckpt
//!   <out>/<pipeline>/record.json
//! and <out>/summary.csv is regenerated from every record.json below <out>,
//! so reruns overwrite identical content instead of appending duplicates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{Metrics, MetricLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Scratch,
    FullKd,
    Eskd,
    EsTeacherKd,
    SequentialKd,
    StepwiseKd,
    EnsembleEval,
    Sweep,
    Ablation,
}

impl PipelineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineKind::Scratch => "scratch",
            PipelineKind::FullKd => "full_kd",
            PipelineKind::Eskd => "eskd",
            PipelineKind::EsTeacherKd => "es_teacher_kd",
            PipelineKind::SequentialKd => "sequential_kd",
            PipelineKind::StepwiseKd => "stepwise_kd",
            PipelineKind::EnsembleEval => "ensemble_eval",
            PipelineKind::Sweep => "sweep",
            PipelineKind::Ablation => "ablation",
        }
    }
}

/// Median, mean and sample standard deviation of final test errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

/// Exact summary statistics: sorted-order median (mean of the middle pair for
/// even counts), arithmetic mean, sample standard deviation (0 for n <= 1).
pub fn summary_stats(values: &[f64]) -> SummaryStats {
    assert!(!values.is_empty(), "summary over no values");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n <= 1 {
        0.0
    } else {
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    };
    SummaryStats { median, mean, std }
}

/// A teacher used by some stage: its checkpoint digest and held-out error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherInfo {
    pub id: String,
    pub spec_json: serde_json::Value,
    pub parameter_count: usize,
    pub test_top1: f64,
    pub seed: Option<u64>,
}

/// One trained stage of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: usize,
    pub teacher_id: Option<String>,
    pub init_seed: u64,
    pub train_seed: u64,
    pub model_digest: String,
    /// Final evaluation on the train split (with teacher diagnostics if any).
    pub train_metrics: Metrics,
    /// Final evaluation on the held-out split.
    pub test_metrics: Metrics,
    /// Full per-epoch log; stored as metrics.jsonl next to the checkpoint.
    #[serde(skip)]
    pub log: MetricLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub stages: Vec<StageOutcome>,
}

/// Everything one pipeline produced. Self-describing: the descriptor captures
/// the construction arguments so a rerun reproduces the record bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub kind: PipelineKind,
    pub descriptor: serde_json::Value,
    /// Dataset provenance and batching knobs the runs consumed.
    pub data: serde_json::Value,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub teachers: Vec<TeacherInfo>,
    pub runs: Vec<SeedRun>,
    /// Over final-stage test top-1 across seeds.
    pub summary: SummaryStats,
}

impl ExperimentRecord {
    /// Final-stage test top-1 per seed, in seed order.
    pub fn final_errors(&self) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| r.stages.last().expect("nonempty stages").test_metrics.top1_error_pct)
            .collect()
    }

    pub fn recompute_summary(&self) -> SummaryStats {
        summary_stats(&self.final_errors())
    }

    pub fn dir(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(&self.name)
    }
}

pub fn stage_dir(out_dir: &Path, pipeline: &str, seed: u64, stage: usize) -> PathBuf {
    out_dir.join(pipeline).join(seed.to_string()).join(format!("stage-{stage}"))
}

/// Writes one stage's artifacts (metrics.jsonl is the serialized log).
pub fn write_stage_artifacts(
    out_dir: &Path,
    pipeline: &str,
    seed: u64,
    stage: &StageOutcome,
    model: &crate::model::Model,
) -> Result<()> {
    let dir = stage_dir(out_dir, pipeline, seed, stage.stage);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("metrics.jsonl"), stage.log.to_jsonl()?)?;
    crate::checkpoint::save_checkpoint(model, &dir.join("model.ckpt"))?;
    Ok(())
}

/// Writes record.json for a pipeline.
pub fn write_record(out_dir: &Path, record: &ExperimentRecord) -> Result<()> {
    let dir = record.dir(out_dir);
    std::fs::create_dir_all(&dir)?;
    let json = serde_json::to_string_pretty(record)?;
    std::fs::write(dir.join("record.json"), json)?;
    Ok(())
}

/// Loads a pipeline record, rehydrating each stage's metric log from its
/// metrics.jsonl.
pub fn load_record(out_dir: &Path, pipeline: &str) -> Result<ExperimentRecord> {
    let path = out_dir.join(pipeline).join("record.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::report(format!("cannot read {}: {e}", path.display())))?;
    let mut record: ExperimentRecord = serde_json::from_str(&text)?;
    for run in &mut record.runs {
        for stage in &mut run.stages {
            let p = stage_dir(out_dir, pipeline, run.seed, stage.stage).join("metrics.jsonl");
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Error::report(format!("cannot read {}: {e}", p.display())))?;
            stage.log = MetricLog::from_jsonl(&text)?;
        }
    }
    Ok(record)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Regenerates <out>/summary.csv from every record.json under <out>, in
/// sorted pipeline order. One row per (pipeline, seed, stage).
pub fn rebuild_summary_csv(out_dir: &Path) -> Result<PathBuf> {
    let mut pipelines: Vec<String> = Vec::new();
    if out_dir.is_dir() {
        for entry in std::fs::read_dir(out_dir)? {
            let entry = entry?;
            if entry.path().join("record.json").is_file() {
                pipelines.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    pipelines.sort();

    let mut csv = String::from(
        "pipeline,stage,teacher_id,seed,final_top1,final_top5,train_ce,train_kd,test_kd,kd_error\n",
    );
    for name in &pipelines {
        let record = load_record(out_dir, name)?;
        for run in &record.runs {
            for stage in &run.stages {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    record.name,
                    stage.stage,
                    stage.teacher_id.clone().unwrap_or_else(|| "-".to_string()),
                    run.seed,
                    stage.test_metrics.top1_error_pct,
                    stage.test_metrics.top5_error_pct,
                    stage.train_metrics.ce,
                    fmt_opt(stage.train_metrics.kd),
                    fmt_opt(stage.test_metrics.kd),
                    fmt_opt(stage.test_metrics.kd_error),
                ));
            }
        }
    }
    let path = out_dir.join("summary.csv");
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(&path, csv)?;
    Ok(path)
}
