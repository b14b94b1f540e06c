//! The SGD training loop with distillation, loss-mode switching and per-epoch
//! metrics.
//!
//! A run is a pure function of (initial model, data, teacher parameters,
//! distillation config, schedule, seed): shuffling and augmentation draw from
//! per-purpose streams keyed by the seed and epoch, the teacher runs in
//! evaluation mode outside the tape once per batch, and all kernels are
//! deterministic, so identical inputs reproduce identical parameters and
//! metrics bitwise. Wall-clock timings are kept out of the serialized metric
//! log for the same reason (the `wall_ms` field is written as 0; measured
//! times live in `MetricLog::measured_wall_ms`).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentPolicy, Dataset};
use crate::error::{Error, Result};
use crate::losses::{attention_map_value, composite_loss, DistillConfig, TeacherBatch};
use crate::model::{Family, Model};
use crate::optim::{sgd_step, SgdState};
use crate::rng::{stream, StreamPurpose};
use crate::schedule::{lr_at, ScheduleSpec};
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 256;

/// Evaluation metrics over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1_error_pct: f64,
    pub top5_error_pct: f64,
    pub ce: f64,
    /// Distillation loss against the teacher at the given temperature.
    pub kd: Option<f64>,
    /// Fraction of samples where student and teacher argmax disagree.
    pub kd_error: Option<f64>,
}

/// One epoch's log line. Serialized field order is the JSONL contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_ce: f64,
    pub train_kd: Option<f64>,
    pub test_top1: f64,
    pub test_top5: f64,
    pub test_kd: Option<f64>,
    pub kd_error: Option<f64>,
    pub wall_ms: u64,
}

/// Per-epoch training log plus non-serialized instrumentation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub epochs: Vec<EpochMetrics>,
    /// Whether the distillation branch executed in each epoch.
    pub kd_active: Vec<bool>,
    /// Measured wall time per epoch; excluded from serialization.
    pub measured_wall_ms: Vec<u64>,
}

impl MetricLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<MetricLog> {
        let mut epochs = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            epochs.push(serde_json::from_str(line)?);
        }
        Ok(MetricLog { epochs, kd_active: Vec::new(), measured_wall_ms: Vec::new() })
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// Training data plus the batch-level knobs that go with it.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Dataset,
    pub test: Dataset,
    pub batch_size: usize,
    pub augment: AugmentPolicy,
}

impl TrainData {
    pub fn new(train: Dataset, test: Dataset) -> TrainData {
        TrainData { train, test, batch_size: 128, augment: AugmentPolicy::None }
    }
}

fn check_compat(model: &Model, data: &TrainData) -> Result<()> {
    if data.train.sample_shape() != &model.spec().input_shape[..] {
        return Err(Error::config(format!(
            "dataset sample shape {:?} does not match model input {:?}",
            data.train.sample_shape(),
            model.spec().input_shape
        )));
    }
    if data.train.num_classes() != model.spec().num_classes {
        return Err(Error::config(format!(
            "dataset has {} classes, model expects {}",
            data.train.num_classes(),
            model.spec().num_classes
        )));
    }
    Ok(())
}

/// Trains a model. Returns the final model and the per-epoch metric log.
pub fn train(
    model: Model,
    data: &TrainData,
    teacher: Option<&Model>,
    cfg: &DistillConfig,
    schedule: &ScheduleSpec,
    seed: u64,
) -> Result<(Model, MetricLog)> {
    cfg.validate()?;
    schedule.validate()?;
    let n_epochs = schedule.total_epochs;
    if let Some(switch) = cfg.switch_epoch {
        if switch > n_epochs {
            return Err(Error::parameter(format!(
                "switch_epoch {switch} exceeds total epochs {n_epochs}"
            )));
        }
    }
    check_compat(&model, data)?;

    let teacher_required = cfg.alpha < 1.0 && cfg.switch_epoch.map_or(true, |s| s > 0);
    match teacher {
        None if teacher_required => {
            return Err(Error::config(
                "distillation is active but no teacher was given".to_string(),
            ))
        }
        Some(t) => {
            if !t.compatible_io(&model) {
                return Err(Error::config(format!(
                    "teacher io ({:?}, {}) does not match student io ({:?}, {})",
                    t.spec().input_shape,
                    t.spec().num_classes,
                    model.spec().input_shape,
                    model.spec().num_classes
                )));
            }
        }
        None => {}
    }
    let at_pair = teacher.is_some_and(|t| {
        t.spec().family == Family::Convnet && model.spec().family == Family::Convnet
    });

    let mut model = model;
    let mut opt_state = SgdState::new(&model);
    let mut log = MetricLog::default();
    let n_train = data.train.len() as f64;

    // Teacher logits on the fixed test split do not change across epochs.
    let teacher_test_logits = match teacher {
        Some(t) => Some(chunk_logits(t, &data.test)?),
        None => None,
    };

    for epoch in 0..n_epochs {
        let started = Instant::now();
        let lr = lr_at(schedule, epoch)?;
        let kd_active = teacher.is_some() && cfg.distill_active(epoch);
        let mut ce_sum = 0.0f64;
        let mut kd_sum = 0.0f64;

        let mut augment_rng = stream(seed, StreamPurpose::Augment, epoch as u64);
        for batch_idx in data.train.batch_indices(data.batch_size, seed, epoch)? {
            let (raw_inputs, labels) = data.train.gather(&batch_idx)?;
            let inputs = augment(&raw_inputs, data.augment, &mut augment_rng)?;

            let teacher_batch = if kd_active {
                let t = teacher.expect("kd_active implies teacher");
                let (logits, activations) = t.forward(&inputs)?;
                let attention = if at_pair && cfg.at_beta > 0.0 {
                    activations
                        .iter()
                        .map(attention_map_value)
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Some(TeacherBatch { logits, attention })
            } else {
                None
            };

            let mut tape = crate::tape::Tape::new();
            let (logits, activations, param_vars) = model.forward_on_tape(&mut tape, &inputs)?;
            let student_acts = if teacher_batch.as_ref().is_some_and(|t| !t.attention.is_empty()) {
                activations
            } else {
                Vec::new()
            };
            let parts = composite_loss(
                &mut tape,
                logits,
                &student_acts,
                teacher_batch.as_ref(),
                &labels,
                cfg,
                epoch,
            )?;
            tape.backward(parts.total).map_err(|e| {
                Error::numeric(format!("backward failed at epoch {epoch}: {e}"))
            })?;

            let batch_n = labels.len() as f64;
            ce_sum += f64::from(tape.value(parts.ce).data()[0]) * batch_n;
            if let Some(kd) = parts.kd {
                kd_sum += f64::from(tape.value(kd).data()[0]) * batch_n;
            }

            for (param, var) in model.params_mut().iter_mut().zip(&param_vars) {
                tape.write_grad_into(*var, &mut param.tensor)?;
            }
            sgd_step(
                &mut model,
                &mut opt_state,
                lr as f32,
                schedule.momentum,
                schedule.nesterov,
                schedule.weight_decay,
            )
            .map_err(|e| Error::numeric(format!("epoch {epoch}: {e}")))?;
        }

        let test = eval_core(&model, &data.test, cfg.temperature, teacher_test_logits.as_deref())?;
        log.epochs.push(EpochMetrics {
            epoch,
            lr,
            train_ce: ce_sum / n_train,
            train_kd: kd_active.then_some(kd_sum / n_train),
            test_top1: test.top1_error_pct,
            test_top5: test.top5_error_pct,
            test_kd: test.kd,
            kd_error: test.kd_error,
            wall_ms: 0,
        });
        log.kd_active.push(kd_active);
        log.measured_wall_ms.push(started.elapsed().as_millis() as u64);
    }
    Ok((model, log))
}

/// Evaluation-mode logits per fixed-size chunk of the dataset.
fn chunk_logits(model: &Model, dataset: &Dataset) -> Result<Vec<Tensor>> {
    dataset
        .eval_batches(EVAL_CHUNK)
        .iter()
        .map(|chunk| {
            let (inputs, _) = dataset.gather(chunk)?;
            Ok(model.forward(&inputs)?.0)
        })
        .collect()
}

/// Streaming metrics over a dataset: top-1/top-5 error percentages, mean
/// cross-entropy, and (with a teacher) the distillation loss at `tau` plus the
/// argmax-disagreement fraction. Per-sample terms accumulate in f64 in dataset
/// order, so the result is independent of the chunking.
pub fn evaluate(model: &Model, dataset: &Dataset, teacher: Option<&Model>, tau: f32) -> Result<Metrics> {
    let cache = match teacher {
        Some(t) => {
            if !t.compatible_io(model) {
                return Err(Error::config(
                    "teacher io does not match student io".to_string(),
                ));
            }
            Some(chunk_logits(t, dataset)?)
        }
        None => None,
    };
    eval_core(model, dataset, tau, cache.as_deref())
}

fn eval_core(
    model: &Model,
    dataset: &Dataset,
    tau: f32,
    teacher_chunk_logits: Option<&[Tensor]>,
) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::data("evaluate: empty dataset".to_string()));
    }
    let k = dataset.num_classes();
    let mut wrong1 = 0usize;
    let mut wrong5 = 0usize;
    let mut disagree = 0usize;
    let mut ce_sum = 0.0f64;
    let mut kd_sum = 0.0f64;
    let n = dataset.len();

    for (chunk_i, chunk) in dataset.eval_batches(EVAL_CHUNK).iter().enumerate() {
        let (inputs, labels) = dataset.gather(chunk)?;
        let (logits, _) = model.forward(&inputs)?;
        let teacher_logits = teacher_chunk_logits.map(|c| &c[chunk_i]);
        let lsm = crate::ops::log_softmax_rows_f64(&logits, 1.0)?;

        let kd_rows: Option<(Vec<f64>, Vec<f64>)> = match teacher_logits {
            Some(tl) => {
                let targets = crate::ops::softmax_rows_f64(tl, tau)?;
                let slsm = crate::ops::log_softmax_rows_f64(&logits, tau)?;
                Some((targets, slsm))
            }
            None => None,
        };

        for (row, &label) in labels.iter().enumerate() {
            let r = &logits.data()[row * k..(row + 1) * k];
            let label = label as usize;
            let pred = Tensor::argmax_row(r);
            if pred != label {
                wrong1 += 1;
            }
            // Rank of the label under (-logit, index) ordering.
            let mut ahead = 0usize;
            for (j, &v) in r.iter().enumerate() {
                if v > r[label] || (v == r[label] && j < label) {
                    ahead += 1;
                }
            }
            if ahead >= 5 {
                wrong5 += 1;
            }
            ce_sum += -lsm[row * k + label];

            if let (Some(tl), Some((targets, slsm))) = (teacher_logits, &kd_rows) {
                let trow = &tl.data()[row * k..(row + 1) * k];
                if Tensor::argmax_row(trow) != pred {
                    disagree += 1;
                }
                let mut dot = 0.0f64;
                for j in 0..k {
                    dot += targets[row * k + j] * slsm[row * k + j];
                }
                kd_sum += -f64::from(tau) * f64::from(tau) * dot;
            }
        }
    }

    let has_teacher = teacher_chunk_logits.is_some();
    Ok(Metrics {
        top1_error_pct: 100.0 * wrong1 as f64 / n as f64,
        top5_error_pct: 100.0 * wrong5 as f64 / n as f64,
        ce: ce_sum / n as f64,
        kd: has_teacher.then_some(kd_sum / n as f64),
        kd_error: has_teacher.then_some(disagree as f64 / n as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_mixture, Split};
    use crate::model::ModelSpec;

    fn toy_data(classes: usize) -> TrainData {
        let train = gen_gaussian_mixture(classes, 4, 20, 0.5, 11, Split::Train).unwrap();
        let test = gen_gaussian_mixture(classes, 4, 20, 0.5, 11, Split::Test).unwrap();
        TrainData { train, test, batch_size: 32, augment: AugmentPolicy::None }
    }

    fn mlp(classes: usize, width: usize, seed: u64) -> Model {
        Model::build(&ModelSpec {
            family: Family::Mlp,
            depth_factor: 1,
            width_factor: width,
            input_shape: vec![4],
            num_classes: classes,
            init_seed: seed,
        })
        .unwrap()
    }

    fn short_schedule(epochs: usize) -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: epochs,
            mode: crate::schedule::ScheduleMode::Step { drop_every: max(epochs / 2, 1) },
            initial_lr: 0.1,
            drop_factor: 0.2,
            momentum: 0.9,
            nesterov: false,
            weight_decay: 0.0,
        }
    }

    use std::cmp::max;

    fn params_bits(model: &Model) -> Vec<Vec<u32>> {
        model
            .params()
            .iter()
            .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn scratch_training_learns_and_reproduces() {
        let data = toy_data(3);
        let cfg = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
        let sched = short_schedule(6);
        let (m1, log1) = train(mlp(3, 1, 5), &data, None, &cfg, &sched, 42).unwrap();
        let (m2, log2) = train(mlp(3, 1, 5), &data, None, &cfg, &sched, 42).unwrap();
        assert_eq!(params_bits(&m1), params_bits(&m2));
        assert_eq!(log1.to_jsonl().unwrap(), log2.to_jsonl().unwrap());
        // Should beat chance comfortably on this easy mixture.
        let final_err = log1.last().unwrap().test_top1;
        assert!(final_err < 50.0, "top-1 error {final_err}");
        assert!(log1.epochs.iter().all(|e| e.train_kd.is_none()));
    }

    #[test]
    fn alpha_one_ignores_teacher_bitwise() {
        let data = toy_data(3);
        let cfg = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
        let sched = short_schedule(4);
        let teacher = {
            let cfg_t = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
            train(mlp(3, 2, 7), &data, None, &cfg_t, &sched, 1).unwrap().0
        };
        let (no_teacher, _) = train(mlp(3, 1, 5), &data, None, &cfg, &sched, 42).unwrap();
        let (with_teacher, _) = train(mlp(3, 1, 5), &data, Some(&teacher), &cfg, &sched, 42).unwrap();
        assert_eq!(params_bits(&no_teacher), params_bits(&with_teacher));
    }

    #[test]
    fn kd_branch_timeline_follows_switch() {
        let data = toy_data(3);
        let sched = short_schedule(6);
        let teacher = {
            let cfg_t = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
            train(mlp(3, 2, 7), &data, None, &cfg_t, &sched, 1).unwrap().0
        };
        let cfg = DistillConfig { switch_epoch: Some(3), ..DistillConfig::default() };
        let (_, log) = train(mlp(3, 1, 5), &data, Some(&teacher), &cfg, &sched, 42).unwrap();
        assert_eq!(log.kd_active, vec![true, true, true, false, false, false]);
        for (e, metrics) in log.epochs.iter().enumerate() {
            assert_eq!(metrics.train_kd.is_some(), e < 3);
            // Teacher diagnostics stay on even after the switch.
            assert!(metrics.test_kd.is_some() && metrics.kd_error.is_some());
        }
    }

    #[test]
    fn missing_teacher_rejected_when_required() {
        let data = toy_data(3);
        let cfg = DistillConfig::default();
        let err = train(mlp(3, 1, 5), &data, None, &cfg, &short_schedule(2), 42).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn teacher_io_mismatch_rejected() {
        let data = toy_data(3);
        let teacher = mlp(4, 2, 7); // wrong class count
        let cfg = DistillConfig::default();
        let err = train(mlp(3, 1, 5), &data, Some(&teacher), &cfg, &short_schedule(2), 42).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn self_evaluation_has_zero_kd_error() {
        let data = toy_data(3);
        let model = mlp(3, 1, 5);
        let m = evaluate(&model, &data.test, Some(&model), 4.0).unwrap();
        assert_eq!(m.kd_error, Some(0.0));
    }

    #[test]
    fn constant_logits_score_chance_level() {
        let data = toy_data(4);
        let mut model = mlp(4, 1, 5);
        for p in model.params_mut() {
            p.tensor.data_mut().fill(0.0);
        }
        let m = evaluate(&model, &data.test, None, 4.0).unwrap();
        // Balanced 4-class set, constant logits, ties to class 0:
        // top-1 error = (K-1)/K.
        assert!((m.top1_error_pct - 75.0).abs() < 1e-9, "{}", m.top1_error_pct);
        assert_eq!(m.top5_error_pct, 0.0);
    }

    #[test]
    fn streaming_equals_whole_pass() {
        let train_set = gen_gaussian_mixture(5, 4, 120, 0.6, 3, Split::Train).unwrap();
        let model = mlp(5, 1, 5);
        let teacher = mlp(5, 2, 9);
        // EVAL_CHUNK is 256; 600 samples stream over 3 chunks. Recompute in
        // one pass by gathering everything at once.
        use crate::losses;
        let streamed = evaluate(&model, &train_set, Some(&teacher), 4.0).unwrap();
        let all: Vec<usize> = (0..train_set.len()).collect();
        let (inputs, labels) = train_set.gather(&all).unwrap();
        let (logits, _) = model.forward(&inputs).unwrap();
        let (tlogits, _) = teacher.forward(&inputs).unwrap();
        let ce = losses::ce_value(&logits, &labels).unwrap();
        let kd = losses::kd_value(&logits, &tlogits, 4.0).unwrap();
        let k = 5;
        let mut disagree = 0usize;
        for row in 0..train_set.len() {
            let s = Tensor::argmax_row(&logits.data()[row * k..(row + 1) * k]);
            let t = Tensor::argmax_row(&tlogits.data()[row * k..(row + 1) * k]);
            if s != t {
                disagree += 1;
            }
        }
        assert_eq!(streamed.ce, ce);
        assert_eq!(streamed.kd, Some(kd));
        assert_eq!(streamed.kd_error, Some(disagree as f64 / train_set.len() as f64));
    }

    #[test]
    fn metric_log_jsonl_round_trip() {
        let data = toy_data(3);
        let cfg = DistillConfig { alpha: 1.0, ..DistillConfig::default() };
        let (_, log) = train(mlp(3, 1, 5), &data, None, &cfg, &short_schedule(3), 42).unwrap();
        let text = log.to_jsonl().unwrap();
        let parsed = MetricLog::from_jsonl(&text).unwrap();
        assert_eq!(parsed.epochs, log.epochs);
        // JSONL keys are the exact contract.
        let first = text.lines().next().unwrap();
        for key in ["epoch", "lr", "train_ce", "train_kd", "test_top1", "test_top5", "test_kd", "kd_error", "wall_ms"] {
            assert!(first.contains(&format!("\"{key}\"")), "missing {key} in {first}");
        }
    }
}
