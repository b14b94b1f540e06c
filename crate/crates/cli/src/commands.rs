//! Subcommand implementations.

use std::path::{Path, PathBuf};

use distillab_core::checkpoint::{load_checkpoint, model_digest, save_checkpoint};
use distillab_core::orchestrator::{
    self, ensemble_error, run_ablation, run_eskd_comparison, run_full_kd, run_scratch,
    run_sequential, run_stepwise, run_teacher_sweep, PipelineKind, RunContext, TeacherRef,
};
use distillab_core::schedule::early_stopped_teacher;
use distillab_core::train::train;
use distillab_core::{Error, Model, ModelSpec, Result, ScheduleSpec};

use crate::config::{PipelineChoice, RunConfig};

pub struct CommonArgs {
    pub out_override: Option<PathBuf>,
    pub jobs: usize,
    pub seed_offset: u64,
}

fn effective_seeds(cfg: &RunConfig, offset: u64) -> Vec<u64> {
    cfg.seeds.iter().map(|s| s.wrapping_add(offset)).collect()
}

fn out_dir(cfg: &RunConfig, args: &CommonArgs) -> PathBuf {
    args.out_override.clone().unwrap_or_else(|| cfg.out_dir.clone())
}

/// Teacher training schedule, shortened when `n_short` is set.
fn teacher_training_schedule(cfg: &RunConfig) -> Result<ScheduleSpec> {
    let base = cfg.teacher_schedule().clone();
    match cfg.n_short {
        Some(n_short) => early_stopped_teacher(&base, n_short),
        None => Ok(base),
    }
}

/// Trains one teacher per seed and writes checkpoint plus metrics under the
/// output directory. Prints the checkpoint digest per seed.
pub fn cmd_train_teacher(cfg: &RunConfig, args: &CommonArgs) -> Result<()> {
    let block = cfg
        .teacher
        .as_ref()
        .ok_or_else(|| Error::config("missing key `teacher`: train-teacher needs a teacher block".to_string()))?;
    let schedule = teacher_training_schedule(cfg)?;
    let data = cfg.build_data()?;
    let (input_shape, num_classes) = cfg.io_shape();
    let out = out_dir(cfg, args);
    std::fs::create_dir_all(&out)?;

    for seed in effective_seeds(cfg, args.seed_offset) {
        let seeds = orchestrator::teacher_seeds(seed);
        let spec = ModelSpec {
            init_seed: seeds.init,
            ..block.to_spec(input_shape.clone(), num_classes)
        };
        let built = Model::build(&spec)?;
        let (model, log) = train(built, &data, None, &orchestrator::scratch_cfg(), &schedule, seeds.train)?;
        let ckpt = out.join(format!("teacher-{seed}.ckpt"));
        save_checkpoint(&model, &ckpt)?;
        std::fs::write(out.join(format!("teacher-{seed}.metrics.jsonl")), log.to_jsonl()?)?;
        let digest = model_digest(&model)?;
        let final_top1 = log.last().map(|e| e.test_top1).unwrap_or(f64::NAN);
        println!(
            "teacher seed={seed} epochs={} test_top1={final_top1:.3} digest={digest} -> {}",
            schedule.total_epochs,
            ckpt.display()
        );
    }
    Ok(())
}

fn teacher_ref(cfg: &RunConfig, schedule: &ScheduleSpec) -> Result<TeacherRef> {
    if let Some(path) = &cfg.teacher_checkpoint {
        return Ok(TeacherRef::Checkpoint { path: path.clone() });
    }
    let block = cfg
        .teacher
        .as_ref()
        .ok_or_else(|| Error::config("missing key `teacher` or `teacher_checkpoint`".to_string()))?;
    let (input_shape, num_classes) = cfg.io_shape();
    Ok(TeacherRef::Spec {
        spec: block.to_spec(input_shape, num_classes),
        schedule: schedule.clone(),
    })
}

/// Runs the configured pipeline and writes the record layout. The validated
/// config is re-emitted as <out>/config.json.
pub fn cmd_distill(cfg: &RunConfig, args: &CommonArgs) -> Result<()> {
    let data = cfg.build_data()?;
    let out = out_dir(cfg, args);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let ctx = RunContext { data: &data, out_dir: out.clone(), jobs: args.jobs };
    let seeds = effective_seeds(cfg, args.seed_offset);
    let (input_shape, num_classes) = cfg.io_shape();
    let student = cfg
        .student
        .as_ref()
        .map(|b| b.to_spec(input_shape.clone(), num_classes));
    let name = cfg.pipeline_name();

    match cfg.pipeline {
        PipelineChoice::Scratch => {
            let student = student.expect("validated");
            let record = run_scratch(&ctx, &name, &student, &cfg.schedule, &seeds)?;
            println!(
                "scratch: top-1 median {:.3} mean {:.3} std {:.3}",
                record.summary.median, record.summary.mean, record.summary.std
            );
        }
        PipelineChoice::FullKd => {
            let student = student.expect("validated");
            let teacher = teacher_ref(cfg, cfg.teacher_schedule())?;
            let record = run_full_kd(
                &ctx,
                &name,
                PipelineKind::FullKd,
                &student,
                &teacher,
                &cfg.distill,
                &cfg.schedule,
                &seeds,
            )?;
            println!(
                "full_kd: top-1 median {:.3} mean {:.3} std {:.3}",
                record.summary.median, record.summary.mean, record.summary.std
            );
        }
        PipelineChoice::EsTeacherKd => {
            let student = student.expect("validated");
            let schedule = teacher_training_schedule(cfg)?;
            let teacher = teacher_ref(cfg, &schedule)?;
            let record = run_full_kd(
                &ctx,
                &name,
                PipelineKind::EsTeacherKd,
                &student,
                &teacher,
                &cfg.distill,
                &cfg.schedule,
                &seeds,
            )?;
            println!(
                "es_teacher_kd: top-1 median {:.3} mean {:.3} std {:.3}",
                record.summary.median, record.summary.mean, record.summary.std
            );
        }
        PipelineChoice::Eskd => {
            let student = student.expect("validated");
            let teacher = teacher_ref(cfg, cfg.teacher_schedule())?;
            let cmp = run_eskd_comparison(&ctx, &student, &teacher, &cfg.distill, &cfg.schedule, &seeds)?;
            println!(
                "eskd: switch at {}; full median {:.3} vs eskd median {:.3}",
                cmp.switch_epoch, cmp.full_summary.median, cmp.eskd_summary.median
            );
        }
        PipelineChoice::SequentialKd => {
            let student = student.expect("validated");
            let generations = cfg.generations.expect("validated");
            let record = run_sequential(&ctx, &[student], &cfg.distill, &cfg.schedule, &seeds, generations)?;
            println!(
                "sequential: last gen {:.3}, all-gen ensemble {:.3}, scratch {:.3}, scratch ensemble {:.3}",
                record.last_gen.median,
                record.all_gen_ensemble.median,
                record.scratch.median,
                record.scratch_ensemble.median
            );
        }
        PipelineChoice::StepwiseKd => {
            let (input_shape, num_classes) = cfg.io_shape();
            let large = cfg.large.as_ref().expect("validated").to_spec(input_shape.clone(), num_classes);
            let medium = cfg.medium.as_ref().expect("validated").to_spec(input_shape.clone(), num_classes);
            let small = cfg.small.as_ref().expect("validated").to_spec(input_shape, num_classes);
            let record = run_stepwise(
                &ctx,
                &large,
                &medium,
                &small,
                &cfg.distill,
                cfg.teacher_schedule(),
                &cfg.schedule,
                &seeds,
            )?;
            for leg in &record.legs {
                println!("stepwise {}: small top-1 median {:.3}", leg.name, leg.small_top1.median);
            }
        }
        PipelineChoice::Sweep => {
            let student = student.expect("validated");
            let ladder: Vec<ModelSpec> = cfg
                .teacher_ladder
                .as_ref()
                .expect("validated")
                .iter()
                .map(|b| b.to_spec(input_shape.clone(), num_classes))
                .collect();
            let sweep = run_teacher_sweep(
                &ctx,
                &student,
                &ladder,
                cfg.teacher_schedule(),
                &cfg.distill,
                &cfg.schedule,
                &seeds,
            )?;
            for rung in &sweep.rungs {
                println!(
                    "sweep rung {}: teacher params {} err {:.3} -> student median {:.3}",
                    rung.rung, rung.teacher_params, rung.teacher_top1.median, rung.student_top1.median
                );
            }
        }
        PipelineChoice::Ablation => {
            let student = student.expect("validated");
            let teacher = teacher_ref(cfg, cfg.teacher_schedule())?;
            let record = run_ablation(
                &ctx,
                &student,
                &teacher,
                cfg.alphas.as_ref().expect("validated"),
                cfg.taus.as_ref().expect("validated"),
                &cfg.distill,
                &cfg.schedule,
                &seeds,
                cfg.include_eskd_cells,
            )?;
            for cell in &record.cells {
                println!(
                    "ablation alpha={} tau={}{}: student median {:.3}",
                    cell.alpha,
                    cell.tau,
                    if cell.early_stopped { " (eskd)" } else { "" },
                    cell.student_top1.median
                );
            }
        }
        PipelineChoice::EnsembleEval => {
            let paths = cfg.ensemble_checkpoints.as_ref().expect("validated");
            let models: Vec<Model> = paths.iter().map(|p| load_checkpoint(p)).collect::<Result<_>>()?;
            let refs: Vec<&Model> = models.iter().collect();
            let top1 = ensemble_error(&refs, &data.test)?;
            let report = serde_json::json!({
                "checkpoints": paths,
                "members": models.len(),
                "test_top1": top1,
            });
            std::fs::write(out.join("ensemble.json"), serde_json::to_string_pretty(&report)?)?;
            println!("ensemble of {}: test top-1 {top1:.3}", models.len());
        }
    }
    Ok(())
}

/// Runs the verification battery; returns false if any check failed.
pub fn cmd_verify(seed: u64) -> bool {
    let checks = distillab_core::verify::run_all(seed);
    let mut all_pass = true;
    for c in &checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        println!(
            "[{status}] {:<42} measured {:<12.3e} tolerance {:<10.1e} {}",
            c.name, c.measured, c.threshold, c.detail
        );
        all_pass &= c.pass;
    }
    let n_pass = checks.iter().filter(|c| c.pass).count();
    println!("{n_pass}/{} checks passed", checks.len());
    all_pass
}

/// Report entry point shared with main.
pub fn cmd_report(record_dir: &Path, kind: crate::report::ReportKind, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out.unwrap_or(record_dir);
    crate::report::run(record_dir, kind, out_dir)
}
