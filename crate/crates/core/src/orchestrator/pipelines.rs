//! Experiment pipelines: scratch baselines, distillation runs, early-stop
//! comparisons, teacher-capacity sweeps, sequential chains, step-wise
//! distillation and hyperparameter grids.
//!
//! Seed discipline: for experiment seed s, the final student of any pipeline
//! uses init seed derive(s, "student-init") and train seed s; a directly
//! trained teacher uses the "teacher-*" derivations; the step-wise
//! intermediate uses "medium-*"; generation g of a sequential chain uses the
//! "gen-*" derivations with generation 1 equal to the student derivations
//! (generation 1 is the scratch run). Paired pipelines therefore share student
//! init and shuffle streams exactly, and every stage is reproducible as a
//! standalone `train_stage` call given its recorded seeds and teacher.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::{
    rebuild_summary_csv, summary_stats, write_record, write_stage_artifacts, ExperimentRecord,
    PipelineKind, SeedRun, StageOutcome, SummaryStats, TeacherInfo,
};
use crate::checkpoint::{hex_string, load_checkpoint, model_digest, save_checkpoint};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::DistillConfig;
use crate::model::{Model, ModelSpec};
use crate::ops;
use crate::rng::derive_seed;
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;
use crate::train::{evaluate, train, MetricLog, TrainData};

const EVAL_CHUNK: usize = 256;

/// Shared inputs of every pipeline invocation.
pub struct RunContext<'a> {
    pub data: &'a TrainData,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl<'a> RunContext<'a> {
    pub fn new(data: &'a TrainData, out_dir: impl Into<PathBuf>) -> RunContext<'a> {
        RunContext { data, out_dir: out_dir.into(), jobs: 1 }
    }
}

/// Init and shuffle seeds of one trained stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub init: u64,
    pub train: u64,
}

pub fn student_seeds(seed: u64) -> StageSeeds {
    StageSeeds { init: derive_seed(seed, "student-init", 0), train: seed }
}

/// Generation 1 is the scratch run and reuses the student derivations; later
/// generations get fresh streams (fresh shuffle per generation).
pub fn generation_seeds(seed: u64, generation: usize) -> StageSeeds {
    if generation <= 1 {
        student_seeds(seed)
    } else {
        StageSeeds {
            init: derive_seed(seed, "gen-init", generation as u64),
            train: derive_seed(seed, "gen-train", generation as u64),
        }
    }
}

/// The step-wise intermediate model's seeds, shared between the legs that
/// train it with and without a teacher.
pub fn intermediate_seeds(seed: u64) -> StageSeeds {
    StageSeeds {
        init: derive_seed(seed, "medium-init", 0),
        train: derive_seed(seed, "medium-train", 0),
    }
}

pub fn teacher_seeds(seed: u64) -> StageSeeds {
    StageSeeds {
        init: derive_seed(seed, "teacher-init", 0),
        train: derive_seed(seed, "teacher-train", 0),
    }
}

/// Pure cross-entropy training configuration.
pub fn scratch_cfg() -> DistillConfig {
    DistillConfig { alpha: 1.0, at_beta: 0.0, ..DistillConfig::default() }
}

/// A teacher is either trained in-pipeline (through the cache) or loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherRef {
    Spec { spec: ModelSpec, schedule: ScheduleSpec },
    Checkpoint { path: PathBuf },
}

pub struct ProvisionedTeacher {
    pub model: Model,
    pub info: TeacherInfo,
}

fn short_id(digest: &str) -> String {
    digest[..12.min(digest.len())].to_string()
}

/// Trains (or fetches) a teacher. Cached content-addressed under
/// <out>/teachers: the key hashes the spec, schedule, dataset provenance and
/// seed, all of which fully determine the resulting checkpoint bytes.
pub fn provision_teacher(ctx: &RunContext, teacher: &TeacherRef, seed: u64) -> Result<ProvisionedTeacher> {
    match teacher {
        TeacherRef::Checkpoint { path } => {
            let model = load_checkpoint(path)?;
            let digest = model_digest(&model)?;
            let test = evaluate(&model, &ctx.data.test, None, 1.0)?;
            Ok(ProvisionedTeacher {
                info: TeacherInfo {
                    id: short_id(&digest),
                    spec_json: serde_json::to_value(model.spec())?,
                    parameter_count: model.parameter_count(),
                    test_top1: test.top1_error_pct,
                    seed: None,
                },
                model,
            })
        }
        TeacherRef::Spec { spec, schedule } => {
            let seeds = teacher_seeds(seed);
            let spec = ModelSpec { init_seed: seeds.init, ..spec.clone() };
            let key_src = serde_json::to_string(&serde_json::json!({
                "spec": spec,
                "schedule": schedule,
                "train": ctx.data.train.provenance(),
                "test": ctx.data.test.provenance(),
                "batch_size": ctx.data.batch_size,
                "augment": ctx.data.augment,
                "train_seed": seeds.train,
            }))?;
            let mut hasher = Sha256::new();
            hasher.update(key_src.as_bytes());
            let key = hex_string(&hasher.finalize());
            let cache_dir = ctx.out_dir.join("teachers");
            let ckpt_path = cache_dir.join(format!("{key}.ckpt"));
            let meta_path = cache_dir.join(format!("{key}.json"));

            if ckpt_path.is_file() && meta_path.is_file() {
                let model = load_checkpoint(&ckpt_path)?;
                let info: TeacherInfo = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
                return Ok(ProvisionedTeacher { model, info });
            }

            let built = Model::build(&spec)?;
            let (model, _log) = train(built, ctx.data, None, &scratch_cfg(), schedule, seeds.train)?;
            let digest = model_digest(&model)?;
            let test = evaluate(&model, &ctx.data.test, None, 1.0)?;
            let info = TeacherInfo {
                id: short_id(&digest),
                spec_json: serde_json::to_value(&spec)?,
                parameter_count: model.parameter_count(),
                test_top1: test.top1_error_pct,
                seed: Some(seed),
            };
            std::fs::create_dir_all(&cache_dir)?;
            let tmp = cache_dir.join(format!("{key}.ckpt.tmp"));
            save_checkpoint(&model, &tmp)?;
            std::fs::rename(&tmp, &ckpt_path)?;
            std::fs::write(&meta_path, serde_json::to_string_pretty(&info)?)?;
            Ok(ProvisionedTeacher { model, info })
        }
    }
}

/// Builds and trains one stage from explicit seeds. Every pipeline stage is
/// exactly this call, so a stage can be reproduced standalone from its record.
pub fn train_stage(
    data: &TrainData,
    student: &ModelSpec,
    teacher: Option<&Model>,
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: StageSeeds,
) -> Result<(Model, MetricLog)> {
    let spec = ModelSpec { init_seed: seeds.init, ..student.clone() };
    let model = Model::build(&spec)?;
    train(model, data, teacher, cfg, schedule, seeds.train)
}

fn stage_outcome(
    data: &TrainData,
    stage: usize,
    teacher: Option<&Model>,
    teacher_id: Option<String>,
    cfg: &DistillConfig,
    seeds: StageSeeds,
    model: &Model,
    log: MetricLog,
) -> Result<StageOutcome> {
    Ok(StageOutcome {
        stage,
        teacher_id,
        init_seed: seeds.init,
        train_seed: seeds.train,
        model_digest: model_digest(model)?,
        train_metrics: evaluate(model, &data.train, teacher, cfg.temperature)?,
        test_metrics: evaluate(model, &data.test, teacher, cfg.temperature)?,
        log,
    })
}

fn dedup_teachers(mut teachers: Vec<TeacherInfo>) -> Vec<TeacherInfo> {
    teachers.sort_by(|a, b| a.id.cmp(&b.id));
    teachers.dedup_by(|a, b| a.id == b.id);
    teachers
}

fn assemble_record(
    ctx: &RunContext,
    name: &str,
    kind: PipelineKind,
    descriptor: serde_json::Value,
    seeds: &[u64],
    teachers: Vec<TeacherInfo>,
    runs: Vec<SeedRun>,
) -> Result<ExperimentRecord> {
    let record = ExperimentRecord {
        name: name.to_string(),
        kind,
        descriptor,
        data: serde_json::json!({
            "train": ctx.data.train.provenance(),
            "test": ctx.data.test.provenance(),
            "batch_size": ctx.data.batch_size,
            "augment": ctx.data.augment,
        }),
        seeds: seeds.to_vec(),
        jobs: ctx.jobs,
        teachers: dedup_teachers(teachers),
        summary: summary_stats(
            &runs
                .iter()
                .map(|r| r.stages.last().expect("stages").test_metrics.top1_error_pct)
                .collect::<Vec<_>>(),
        ),
        runs,
    };
    write_record(&ctx.out_dir, &record)?;
    rebuild_summary_csv(&ctx.out_dir)?;
    Ok(record)
}

/// Runs `f` over the items with up to `jobs` worker threads, preserving item
/// order in the output. Results are deterministic regardless of the degree
/// because every item's work is self-contained.
pub fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync,
{
    let jobs = jobs.max(1);
    if jobs == 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<Result<R>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((idx, item)) = job else { break };
                let out = f(item);
                results.lock().expect("results lock")[idx] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Scratch baseline: cross-entropy only, no teacher.
pub fn run_scratch(
    ctx: &RunContext,
    name: &str,
    student: &ModelSpec,
    schedule: &ScheduleSpec,
    seeds: &[u64],
) -> Result<ExperimentRecord> {
    let cfg = scratch_cfg();
    let runs = parallel_map(seeds.to_vec(), ctx.jobs, |seed| {
        let ss = student_seeds(seed);
        let (model, log) = train_stage(ctx.data, student, None, &cfg, schedule, ss)?;
        let outcome = stage_outcome(ctx.data, 0, None, None, &cfg, ss, &model, log)?;
        write_stage_artifacts(&ctx.out_dir, name, seed, &outcome, &model)?;
        Ok(SeedRun { seed, stages: vec![outcome] })
    })?;
    assemble_record(
        ctx,
        name,
        PipelineKind::Scratch,
        serde_json::json!({ "student": student, "schedule": schedule, "seeds": seeds }),
        seeds,
        Vec::new(),
        runs,
    )
}

/// One-teacher distillation. ESKD and early-stopped-teacher runs are this
/// pipeline with a switch epoch in `cfg` or a shortened teacher schedule in
/// the ref.
pub fn run_full_kd(
    ctx: &RunContext,
    name: &str,
    kind: PipelineKind,
    student: &ModelSpec,
    teacher: &TeacherRef,
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: &[u64],
) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let results = parallel_map(seeds.to_vec(), ctx.jobs, |seed| {
        let provisioned = provision_teacher(ctx, teacher, seed)?;
        let ss = student_seeds(seed);
        let (model, log) =
            train_stage(ctx.data, student, Some(&provisioned.model), cfg, schedule, ss)?;
        let outcome = stage_outcome(
            ctx.data,
            0,
            Some(&provisioned.model),
            Some(provisioned.info.id.clone()),
            cfg,
            ss,
            &model,
            log,
        )?;
        write_stage_artifacts(&ctx.out_dir, name, seed, &outcome, &model)?;
        Ok((SeedRun { seed, stages: vec![outcome] }, provisioned.info))
    })?;
    let (runs, teachers): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    assemble_record(
        ctx,
        name,
        kind,
        serde_json::json!({
            "student": student, "teacher": teacher, "distill": cfg,
            "schedule": schedule, "seeds": seeds,
        }),
        seeds,
        teachers,
        runs,
    )
}

/// The final-metric columns reported for early-stop comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdColumns {
    pub top1: f64,
    pub train_ce: f64,
    pub train_kd: Option<f64>,
    pub test_kd: Option<f64>,
}

fn kd_columns(stage: &StageOutcome) -> KdColumns {
    KdColumns {
        top1: stage.test_metrics.top1_error_pct,
        train_ce: stage.train_metrics.ce,
        train_kd: stage.train_metrics.kd,
        test_kd: stage.test_metrics.kd,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EskdRow {
    pub seed: u64,
    pub full: KdColumns,
    pub eskd: KdColumns,
    pub delta_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EskdComparison {
    pub switch_epoch: usize,
    pub rows: Vec<EskdRow>,
    pub full_summary: SummaryStats,
    pub eskd_summary: SummaryStats,
    #[serde(skip)]
    pub full: Option<ExperimentRecord>,
    #[serde(skip)]
    pub eskd: Option<ExperimentRecord>,
}

/// Runs full distillation and its early-stopped variant with identical seeds
/// and reports the paired final metrics. The switch epoch defaults to the
/// student schedule's first LR-drop epoch.
pub fn run_eskd_comparison(
    ctx: &RunContext,
    student: &ModelSpec,
    teacher: &TeacherRef,
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: &[u64],
) -> Result<EskdComparison> {
    let switch = match cfg.switch_epoch.or_else(|| schedule.first_drop_epoch()) {
        Some(s) => s,
        None => {
            return Err(Error::config(
                "schedule has no LR drop; set switch_epoch explicitly for the early-stopped run"
                    .to_string(),
            ))
        }
    };
    let full_cfg = DistillConfig { switch_epoch: None, ..cfg.clone() };
    let eskd_cfg = DistillConfig { switch_epoch: Some(switch), ..cfg.clone() };
    let full = run_full_kd(ctx, "full_kd", PipelineKind::FullKd, student, teacher, &full_cfg, schedule, seeds)?;
    let eskd = run_full_kd(ctx, "eskd", PipelineKind::Eskd, student, teacher, &eskd_cfg, schedule, seeds)?;

    let rows: Vec<EskdRow> = full
        .runs
        .iter()
        .zip(&eskd.runs)
        .map(|(f, e)| {
            let fc = kd_columns(&f.stages[0]);
            let ec = kd_columns(&e.stages[0]);
            EskdRow { seed: f.seed, delta_top1: ec.top1 - fc.top1, full: fc, eskd: ec }
        })
        .collect();
    let comparison = EskdComparison {
        switch_epoch: switch,
        rows,
        full_summary: full.summary.clone(),
        eskd_summary: eskd.summary.clone(),
        full: Some(full),
        eskd: Some(eskd),
    };
    std::fs::write(
        ctx.out_dir.join("eskd_comparison.json"),
        serde_json::to_string_pretty(&comparison)?,
    )?;
    Ok(comparison)
}

/// One rung of a teacher-capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRung {
    pub rung: usize,
    pub pipeline: String,
    pub teacher_params: usize,
    pub teacher_top1: SummaryStats,
    pub student_top1: SummaryStats,
    /// Argmax disagreement with the teacher on the train split.
    pub train_kd_error: SummaryStats,
    pub test_kd_loss: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rungs: Vec<SweepRung>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

/// Distills a fixed student from each teacher on a strictly-growing capacity
/// ladder, training each teacher once per seed through the cache.
pub fn run_teacher_sweep(
    ctx: &RunContext,
    student: &ModelSpec,
    ladder: &[ModelSpec],
    teacher_schedule: &ScheduleSpec,
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: &[u64],
) -> Result<SweepRecord> {
    if ladder.len() < 3 {
        return Err(Error::config(format!(
            "teacher ladder needs >= 3 rungs, got {}",
            ladder.len()
        )));
    }
    let counts: Vec<usize> = ladder
        .iter()
        .map(|s| s.parameter_count())
        .collect::<Result<_>>()?;
    for (i, pair) in counts.windows(2).enumerate() {
        if pair[0] >= pair[1] {
            return Err(Error::config(format!(
                "ladder capacity must strictly increase; rung {i} has {} then {}",
                pair[0],
                pair[1]
            )));
        }
    }

    let mut rungs = Vec::with_capacity(ladder.len());
    let mut records = Vec::with_capacity(ladder.len());
    for (i, teacher_spec) in ladder.iter().enumerate() {
        let name = format!("sweep_rung-{i}");
        let teacher = TeacherRef::Spec { spec: teacher_spec.clone(), schedule: teacher_schedule.clone() };
        let record = run_full_kd(ctx, &name, PipelineKind::Sweep, student, &teacher, cfg, schedule, seeds)?;
        let teacher_top1: Vec<f64> = record.teachers.iter().map(|t| t.test_top1).collect();
        let train_kd_error: Vec<f64> = record
            .runs
            .iter()
            .map(|r| r.stages[0].train_metrics.kd_error.expect("teacher present"))
            .collect();
        let test_kd: Vec<f64> = record
            .runs
            .iter()
            .map(|r| r.stages[0].test_metrics.kd.expect("teacher present"))
            .collect();
        rungs.push(SweepRung {
            rung: i,
            pipeline: name,
            teacher_params: counts[i],
            teacher_top1: summary_stats(&teacher_top1),
            student_top1: record.summary.clone(),
            train_kd_error: summary_stats(&train_kd_error),
            test_kd_loss: summary_stats(&test_kd),
        });
        records.push(record);
    }
    let sweep = SweepRecord { rungs, records };
    std::fs::write(ctx.out_dir.join("sweep.json"), serde_json::to_string_pretty(&sweep)?)?;
    Ok(sweep)
}

/// Per-seed columns of the sequential-chain report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRow {
    pub seed: u64,
    pub last_gen_top1: f64,
    pub all_gen_ensemble_top1: f64,
    pub scratch_top1: f64,
    pub scratch_ensemble_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRecord {
    pub generations: usize,
    pub rows: Vec<SequentialRow>,
    pub last_gen: SummaryStats,
    pub all_gen_ensemble: SummaryStats,
    pub scratch: SummaryStats,
    pub scratch_ensemble: SummaryStats,
    #[serde(skip)]
    pub chain: Option<ExperimentRecord>,
    #[serde(skip)]
    pub scratch_record: Option<ExperimentRecord>,
}

/// Sequential (born-again) distillation: generation 1 trains from scratch,
/// generation i > 1 distills from generation i-1. Also trains the same number
/// of scratch models on the generation seeds and reports both ensembles.
pub fn run_sequential(
    ctx: &RunContext,
    specs: &[ModelSpec],
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: &[u64],
    generations: usize,
) -> Result<SequentialRecord> {
    if generations == 0 {
        return Err(Error::parameter("generations must be >= 1".to_string()));
    }
    if specs.is_empty() || (specs.len() != 1 && specs.len() != generations) {
        return Err(Error::config(format!(
            "chain must list one spec (born-again) or one per generation; got {} specs for {generations} generations",
            specs.len()
        )));
    }
    let spec_for = |generation: usize| -> &ModelSpec {
        if specs.len() == 1 {
            &specs[0]
        } else {
            &specs[generation - 1]
        }
    };

    let chain_runs = parallel_map(seeds.to_vec(), ctx.jobs, |seed| {
        let mut stages = Vec::with_capacity(generations);
        let mut models: Vec<Model> = Vec::with_capacity(generations);
        for generation in 1..=generations {
            let ss = generation_seeds(seed, generation);
            let (teacher, teacher_id, stage_cfg) = if generation == 1 {
                (None, None, scratch_cfg())
            } else {
                let prev = &models[generation - 2];
                (Some(prev), Some(short_id(&model_digest(prev)?)), cfg.clone())
            };
            let (model, log) =
                train_stage(ctx.data, spec_for(generation), teacher, &stage_cfg, schedule, ss)?;
            let outcome = stage_outcome(
                ctx.data,
                generation - 1,
                teacher,
                teacher_id,
                &stage_cfg,
                ss,
                &model,
                log,
            )?;
            write_stage_artifacts(&ctx.out_dir, "sequential", seed, &outcome, &model)?;
            stages.push(outcome);
            models.push(model);
        }
        let ensemble_refs: Vec<&Model> = models.iter().collect();
        let ensemble_top1 = ensemble_error(&ensemble_refs, &ctx.data.test)?;
        Ok((SeedRun { seed, stages }, ensemble_top1))
    })?;

    let scratch_runs = parallel_map(seeds.to_vec(), ctx.jobs, |seed| {
        let mut stages = Vec::with_capacity(generations);
        let mut models = Vec::with_capacity(generations);
        let cfg = scratch_cfg();
        for generation in 1..=generations {
            let ss = generation_seeds(seed, generation);
            let (model, log) = train_stage(ctx.data, spec_for(generation), None, &cfg, schedule, ss)?;
            let outcome = stage_outcome(ctx.data, generation - 1, None, None, &cfg, ss, &model, log)?;
            write_stage_artifacts(&ctx.out_dir, "sequential_scratch", seed, &outcome, &model)?;
            stages.push(outcome);
            models.push(model);
        }
        let ensemble_refs: Vec<&Model> = models.iter().collect();
        let ensemble_top1 = ensemble_error(&ensemble_refs, &ctx.data.test)?;
        Ok((SeedRun { seed, stages }, ensemble_top1))
    })?;

    let mut rows = Vec::with_capacity(seeds.len());
    for ((chain_run, chain_ens), (scratch_run, scratch_ens)) in
        chain_runs.iter().zip(&scratch_runs)
    {
        rows.push(SequentialRow {
            seed: chain_run.seed,
            last_gen_top1: chain_run.stages.last().unwrap().test_metrics.top1_error_pct,
            all_gen_ensemble_top1: *chain_ens,
            scratch_top1: scratch_run.stages[0].test_metrics.top1_error_pct,
            scratch_ensemble_top1: *scratch_ens,
        });
    }

    let descriptor = serde_json::json!({
        "specs": specs, "distill": cfg, "schedule": schedule,
        "seeds": seeds, "generations": generations,
    });
    let chain = assemble_record(
        ctx,
        "sequential",
        PipelineKind::SequentialKd,
        descriptor.clone(),
        seeds,
        Vec::new(),
        chain_runs.into_iter().map(|(r, _)| r).collect(),
    )?;
    let scratch_record = assemble_record(
        ctx,
        "sequential_scratch",
        PipelineKind::Scratch,
        descriptor,
        seeds,
        Vec::new(),
        scratch_runs.into_iter().map(|(r, _)| r).collect(),
    )?;

    let record = SequentialRecord {
        generations,
        last_gen: summary_stats(&rows.iter().map(|r| r.last_gen_top1).collect::<Vec<_>>()),
        all_gen_ensemble: summary_stats(&rows.iter().map(|r| r.all_gen_ensemble_top1).collect::<Vec<_>>()),
        scratch: summary_stats(&rows.iter().map(|r| r.scratch_top1).collect::<Vec<_>>()),
        scratch_ensemble: summary_stats(&rows.iter().map(|r| r.scratch_ensemble_top1).collect::<Vec<_>>()),
        rows,
        chain: Some(chain),
        scratch_record: Some(scratch_record),
    };
    std::fs::write(
        ctx.out_dir.join("sequential.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseLeg {
    pub name: String,
    pub pipeline: String,
    pub teacher_top1: SummaryStats,
    pub small_top1: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseRecord {
    pub legs: Vec<StepwiseLeg>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

/// The three step-wise procedures side by side: large -> medium -> small,
/// medium -> small, large -> small. The small model shares its seeds across
/// legs, so differences are attributable to the teachers alone.
pub fn run_stepwise(
    ctx: &RunContext,
    large: &ModelSpec,
    medium: &ModelSpec,
    small: &ModelSpec,
    cfg: &DistillConfig,
    teacher_schedule: &ScheduleSpec,
    schedule: &ScheduleSpec,
    seeds: &[u64],
) -> Result<StepwiseRecord> {
    let (cl, cm, cs) = (
        large.parameter_count()?,
        medium.parameter_count()?,
        small.parameter_count()?,
    );
    if !(cl > cm && cm > cs) {
        return Err(Error::config(format!(
            "step-wise chain must be strictly capacity-ordered: large {cl} > medium {cm} > small {cs}"
        )));
    }

    // Leg A: large -> medium -> small. The medium stage pairs its seeds with
    // leg B's scratch-trained medium teacher.
    let leg_a_runs = parallel_map(seeds.to_vec(), ctx.jobs, |seed| {
        let big = provision_teacher(
            ctx,
            &TeacherRef::Spec { spec: large.clone(), schedule: teacher_schedule.clone() },
            seed,
        )?;
        let ms = intermediate_seeds(seed);
        let (mid_model, mid_log) =
            train_stage(ctx.data, medium, Some(&big.model), cfg, schedule, ms)?;
        let mid_outcome = stage_outcome(
            ctx.data, 0, Some(&big.model), Some(big.info.id.clone()), cfg, ms, &mid_model, mid_log,
        )?;
        write_stage_artifacts(&ctx.out_dir, "stepwise_large_med_small", seed, &mid_outcome, &mid_model)?;

        let ss = student_seeds(seed);
        let mid_id = short_id(&model_digest(&mid_model)?);
        let (small_model, small_log) =
            train_stage(ctx.data, small, Some(&mid_model), cfg, schedule, ss)?;
        let small_outcome = stage_outcome(
            ctx.data, 1, Some(&mid_model), Some(mid_id), cfg, ss, &small_model, small_log,
        )?;
        write_stage_artifacts(&ctx.out_dir, "stepwise_large_med_small", seed, &small_outcome, &small_model)?;
        Ok((SeedRun { seed, stages: vec![mid_outcome, small_outcome] }, big.info))
    })?;
    let (leg_a, teachers_a): (Vec<_>, Vec<_>) = leg_a_runs.into_iter().unzip();
    let leg_a_record = assemble_record(
        ctx,
        "stepwise_large_med_small",
        PipelineKind::StepwiseKd,
        serde_json::json!({
            "large": large, "medium": medium, "small": small,
            "distill": cfg, "teacher_schedule": teacher_schedule,
            "schedule": schedule, "seeds": seeds, "leg": "large_med_small",
        }),
        seeds,
        teachers_a,
        leg_a,
    )?;

    // Legs B and C are single full-KD pipelines from cached teachers.
    let leg_b_record = run_full_kd(
        ctx,
        "stepwise_med_small",
        PipelineKind::StepwiseKd,
        small,
        &TeacherRef::Spec { spec: medium.clone(), schedule: teacher_schedule.clone() },
        cfg,
        schedule,
        seeds,
    )?;
    let leg_c_record = run_full_kd(
        ctx,
        "stepwise_large_small",
        PipelineKind::StepwiseKd,
        small,
        &TeacherRef::Spec { spec: large.clone(), schedule: teacher_schedule.clone() },
        cfg,
        schedule,
        seeds,
    )?;

    let small_top1_a: Vec<f64> = leg_a_record
        .runs
        .iter()
        .map(|r| r.stages[1].test_metrics.top1_error_pct)
        .collect();
    let legs = vec![
        StepwiseLeg {
            name: "large_med_small".to_string(),
            pipeline: leg_a_record.name.clone(),
            teacher_top1: summary_stats(
                &leg_a_record.teachers.iter().map(|t| t.test_top1).collect::<Vec<_>>(),
            ),
            small_top1: summary_stats(&small_top1_a),
        },
        StepwiseLeg {
            name: "med_small".to_string(),
            pipeline: leg_b_record.name.clone(),
            teacher_top1: summary_stats(
                &leg_b_record.teachers.iter().map(|t| t.test_top1).collect::<Vec<_>>(),
            ),
            small_top1: leg_b_record.summary.clone(),
        },
        StepwiseLeg {
            name: "large_small".to_string(),
            pipeline: leg_c_record.name.clone(),
            teacher_top1: summary_stats(
                &leg_c_record.teachers.iter().map(|t| t.test_top1).collect::<Vec<_>>(),
            ),
            small_top1: leg_c_record.summary.clone(),
        },
    ];
    let record = StepwiseRecord { legs, records: vec![leg_a_record, leg_b_record, leg_c_record] };
    std::fs::write(ctx.out_dir.join("stepwise.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub alpha: f32,
    pub tau: f32,
    pub early_stopped: bool,
    pub pipeline: String,
    pub student_top1: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub cells: Vec<AblationCell>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

fn fmt_float(v: f32) -> String {
    format!("{v}").replace('.', "p")
}

/// Grid over (alpha, tau) for a fixed student/teacher pair; one full-KD run
/// per cell, plus an early-stopped run per cell when requested.
pub fn run_ablation(
    ctx: &RunContext,
    student: &ModelSpec,
    teacher: &TeacherRef,
    alphas: &[f32],
    taus: &[f32],
    base_cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seeds: &[u64],
    include_eskd: bool,
) -> Result<AblationRecord> {
    if alphas.is_empty() || taus.is_empty() {
        return Err(Error::parameter("ablation grid must be nonempty".to_string()));
    }
    for &a in alphas {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::parameter(format!("alpha {a} outside [0, 1]")));
        }
    }
    for &t in taus {
        if !(t > 0.0) {
            return Err(Error::parameter(format!("tau {t} must be > 0")));
        }
    }
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &alpha in alphas {
        for &tau in taus {
            let mut variants = vec![(false, None)];
            if include_eskd {
                let switch = base_cfg
                    .switch_epoch
                    .or_else(|| schedule.first_drop_epoch())
                    .ok_or_else(|| Error::config("no switch epoch available for eskd cells".to_string()))?;
                variants.push((true, Some(switch)));
            }
            for (early, switch) in variants {
                let cfg = DistillConfig { alpha, temperature: tau, switch_epoch: switch, ..base_cfg.clone() };
                let name = if early {
                    format!("ablation_es_a{}_t{}", fmt_float(alpha), fmt_float(tau))
                } else {
                    format!("ablation_a{}_t{}", fmt_float(alpha), fmt_float(tau))
                };
                let record = run_full_kd(
                    ctx,
                    &name,
                    PipelineKind::Ablation,
                    student,
                    teacher,
                    &cfg,
                    schedule,
                    seeds,
                )?;
                cells.push(AblationCell {
                    alpha,
                    tau,
                    early_stopped: early,
                    pipeline: name,
                    student_top1: record.summary.clone(),
                });
                records.push(record);
            }
        }
    }
    let record = AblationRecord { cells, records };
    std::fs::write(ctx.out_dir.join("ablation.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

// ── ensembles and diagnostics ───────────────────────────────────────────

/// Mean of the models' softmax outputs at temperature 1. The per-class sums
/// are sorted before adding so the result is exactly permutation-invariant.
pub fn ensemble_predict(models: &[&Model], batch: &Tensor) -> Result<Tensor> {
    if models.is_empty() {
        return Err(Error::parameter("ensemble of zero models".to_string()));
    }
    for m in &models[1..] {
        if !m.compatible_io(models[0]) {
            return Err(Error::config(
                "ensemble members disagree on input shape or class count".to_string(),
            ));
        }
    }
    let mut prob_sets = Vec::with_capacity(models.len());
    for m in models {
        let (logits, _) = m.forward(batch)?;
        prob_sets.push(ops::softmax(&logits, 1.0)?);
    }
    let len = prob_sets[0].len();
    let mut out = vec![0.0f32; len];
    let mut addends = vec![0.0f64; models.len()];
    for i in 0..len {
        for (j, p) in prob_sets.iter().enumerate() {
            addends[j] = f64::from(p.data()[i]);
        }
        addends.sort_by(|a, b| a.partial_cmp(b).expect("finite probability"));
        let sum: f64 = addends.iter().sum();
        out[i] = (sum / models.len() as f64) as f32;
    }
    Tensor::new(prob_sets[0].shape().to_vec(), out)
}

/// Top-1 error percentage of the ensemble prediction over a dataset.
pub fn ensemble_error(models: &[&Model], dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::data("ensemble_error: empty dataset".to_string()));
    }
    let k = dataset.num_classes();
    let mut wrong = 0usize;
    for chunk in dataset.eval_batches(EVAL_CHUNK) {
        let (inputs, labels) = dataset.gather(&chunk)?;
        let probs = ensemble_predict(models, &inputs)?;
        for (row, &label) in labels.iter().enumerate() {
            let pred = Tensor::argmax_row(&probs.data()[row * k..(row + 1) * k]);
            if pred != label as usize {
                wrong += 1;
            }
        }
    }
    Ok(100.0 * wrong as f64 / dataset.len() as f64)
}

/// Fraction of samples where student and teacher argmax disagree, streamed
/// over fixed-size batches. Integer counting, so chunking cannot change it.
pub fn kd_error(student: &Model, teacher: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::data("kd_error: empty dataset".to_string()));
    }
    if !student.compatible_io(teacher) {
        return Err(Error::config(
            "kd_error: student and teacher io disagree".to_string(),
        ));
    }
    let k = dataset.num_classes();
    let mut disagree = 0usize;
    for chunk in dataset.eval_batches(EVAL_CHUNK) {
        let (inputs, _) = dataset.gather(&chunk)?;
        let (s_logits, _) = student.forward(&inputs)?;
        let (t_logits, _) = teacher.forward(&inputs)?;
        for row in 0..chunk.len() {
            let s = Tensor::argmax_row(&s_logits.data()[row * k..(row + 1) * k]);
            let t = Tensor::argmax_row(&t_logits.data()[row * k..(row + 1) * k]);
            if s != t {
                disagree += 1;
            }
        }
    }
    Ok(disagree as f64 / dataset.len() as f64)
}

/// Checkpoint digests of every stage model, for bitwise pipeline comparisons.
pub fn run_digests(record: &ExperimentRecord) -> Vec<Vec<String>> {
    record
        .runs
        .iter()
        .map(|r| r.stages.iter().map(|s| s.model_digest.clone()).collect())
        .collect()
}
