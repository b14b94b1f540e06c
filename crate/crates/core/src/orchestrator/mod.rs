//! Experiment orchestration: pipelines, records and their on-disk layout.

pub mod pipelines;
pub mod record;

pub use pipelines::{
    ensemble_error, ensemble_predict, generation_seeds, intermediate_seeds, kd_error,
    parallel_map, provision_teacher, run_ablation, run_digests, run_eskd_comparison,
    run_full_kd, run_scratch, run_sequential, run_stepwise, run_teacher_sweep, scratch_cfg,
    student_seeds, teacher_seeds, train_stage, AblationCell, AblationRecord, EskdComparison,
    EskdRow, KdColumns, ProvisionedTeacher, RunContext, SequentialRecord, SequentialRow,
    StageSeeds, StepwiseLeg, StepwiseRecord, SweepRecord, SweepRung, TeacherRef,
};
pub use record::{
    load_record, rebuild_summary_csv, summary_stats, ExperimentRecord, PipelineKind, SeedRun,
    StageOutcome, SummaryStats, TeacherInfo,
};
