//! Distillation objectives: softened targets, cross-entropy, the composite
//! alpha-weighted objective with its tau^2-scaled distillation term, and the
//! attention-transfer penalty.
//!
//! Teacher outputs enter every loss as plain tensors and are registered on the
//! tape as constants, so no gradient can reach teacher parameters. When the
//! distillation branch is inactive (alpha = 1, or the switch epoch has passed)
//! the composite builder returns the cross-entropy variable itself rather than
//! a zero-weighted sum, keeping such runs bitwise identical to pure
//! cross-entropy training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

/// Hyperparameters of the student objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    /// Weight on the cross-entropy term; 1 - alpha goes to the distillation term.
    pub alpha: f32,
    /// Softening temperature for both teacher and student distributions.
    pub temperature: f32,
    /// Attention-transfer weight; 0 disables the penalty.
    pub at_beta: f32,
    /// Epoch at which the distillation terms are dropped; `None` keeps them
    /// for the whole run.
    pub switch_epoch: Option<usize>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { alpha: 0.9, temperature: 4.0, at_beta: 1000.0, switch_epoch: None }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::parameter(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::parameter(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.at_beta < 0.0 || !self.at_beta.is_finite() {
            return Err(Error::parameter(format!("at_beta must be >= 0, got {}", self.at_beta)));
        }
        Ok(())
    }

    /// True when the distillation terms run at this epoch.
    pub fn distill_active(&self, epoch: usize) -> bool {
        self.alpha < 1.0 && epoch < self.switch_epoch.unwrap_or(usize::MAX)
    }
}

/// Temperature-softened probabilities of a logit matrix (evaluation path).
pub fn soften(logits: &Tensor, tau: f32) -> Result<Tensor> {
    ops::softmax(logits, tau)
}

/// Mean cross-entropy of logits against integer labels, recorded on the tape.
pub fn ce_loss(tape: &mut Tape, logits: VarId, labels: &[u32]) -> Result<VarId> {
    let lsm = tape.log_softmax(logits, 1.0)?;
    let picked = tape.pick_classes(lsm, labels)?;
    let avg = tape.mean(picked)?;
    tape.scale(avg, -1.0)
}

/// Distillation term: tau^2 times the mean cross-entropy between the softened
/// teacher distribution (a constant) and the student's softened distribution.
pub fn kd_loss(tape: &mut Tape, student_logits: VarId, teacher_logits: &Tensor, tau: f32) -> Result<VarId> {
    let ssh = tape.value(student_logits).shape().to_vec();
    if ssh != teacher_logits.shape() {
        return Err(Error::dimension(format!(
            "kd_loss: student logits {ssh:?} vs teacher logits {:?}",
            teacher_logits.shape()
        )));
    }
    let batch = ssh[0];
    let targets = soften(teacher_logits, tau)?;
    let targets = tape.constant(targets);
    let lsm = tape.log_softmax(student_logits, tau)?;
    let weighted = tape.mul(targets, lsm)?;
    let total = tape.sum(weighted)?;
    tape.scale(total, -(tau * tau) / batch as f32)
}

/// Normalized attention map of a 4-D activation, recorded on the tape.
pub fn attention_map(tape: &mut Tape, activation: VarId) -> Result<VarId> {
    let raw = tape.channel_sumsq(activation)?;
    tape.row_l2norm(raw)
}

/// Evaluation-path attention map of a plain activation tensor.
pub fn attention_map_value(activation: &Tensor) -> Result<Tensor> {
    let raw = ops::channel_sumsq(activation)?;
    let (map, _) = ops::row_l2norm(&raw)?;
    Ok(map)
}

/// Attention-transfer penalty: beta times the sum over block pairs of the
/// batch-mean squared L2 distance between normalized maps. Teacher maps are
/// constants; pairing is by block index and spatial sizes must match.
pub fn at_loss(tape: &mut Tape, student_maps: &[VarId], teacher_maps: &[Tensor], beta: f32) -> Result<VarId> {
    if beta < 0.0 {
        return Err(Error::parameter(format!("at_loss: beta must be >= 0, got {beta}")));
    }
    if student_maps.len() != teacher_maps.len() {
        return Err(Error::config(format!(
            "at_loss: {} student blocks vs {} teacher blocks",
            student_maps.len(),
            teacher_maps.len()
        )));
    }
    let mismatched: Vec<String> = student_maps
        .iter()
        .zip(teacher_maps)
        .enumerate()
        .filter(|(_, (s, t))| tape.value(**s).shape() != t.shape())
        .map(|(i, (s, t))| {
            format!("block {i}: {:?} vs {:?}", tape.value(*s).shape().to_vec(), t.shape())
        })
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::config(format!(
            "at_loss: mismatched attention maps [{}]",
            mismatched.join(", ")
        )));
    }

    let mut acc: Option<VarId> = None;
    for (s, t) in student_maps.iter().zip(teacher_maps) {
        let batch = t.shape()[0];
        let target = tape.constant(t.clone());
        let diff = tape.sub(*s, target)?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum(sq)?;
        let pair = tape.scale(total, 1.0 / batch as f32)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, pair)?,
            None => pair,
        });
    }
    let acc = acc.ok_or_else(|| Error::config("at_loss: no attention map pairs".to_string()))?;
    tape.scale(acc, beta)
}

/// Teacher-side quantities for one batch, produced outside the tape.
#[derive(Debug, Clone)]
pub struct TeacherBatch {
    pub logits: Tensor,
    /// Normalized attention maps, one per block (convnets only).
    pub attention: Vec<Tensor>,
}

/// Variables of the student loss, kept separate so the training loop can log
/// the individual terms.
#[derive(Debug, Clone, Copy)]
pub struct CompositeParts {
    pub total: VarId,
    pub ce: VarId,
    pub kd: Option<VarId>,
    pub at: Option<VarId>,
}

/// Builds the full student objective for one batch at a given epoch.
///
/// Active distillation: alpha * CE + (1 - alpha) * KD (+ AT when both sides
/// expose attention maps and beta > 0). At alpha extremes the inactive branch
/// is skipped structurally so the surviving term is bitwise unchanged.
pub fn composite_loss(
    tape: &mut Tape,
    student_logits: VarId,
    student_activations: &[VarId],
    teacher: Option<&TeacherBatch>,
    labels: &[u32],
    cfg: &DistillConfig,
    epoch: usize,
) -> Result<CompositeParts> {
    cfg.validate()?;
    let ce = ce_loss(tape, student_logits, labels)?;
    if !cfg.distill_active(epoch) {
        return Ok(CompositeParts { total: ce, ce, kd: None, at: None });
    }
    let teacher = teacher.ok_or_else(|| {
        Error::config("composite_loss: teacher required while distillation is active".to_string())
    })?;

    let kd = kd_loss(tape, student_logits, &teacher.logits, cfg.temperature)?;

    let at = if cfg.at_beta > 0.0 && !student_activations.is_empty() && !teacher.attention.is_empty() {
        let student_maps: Vec<VarId> = student_activations
            .iter()
            .map(|&a| attention_map(tape, a))
            .collect::<Result<_>>()?;
        Some(at_loss(tape, &student_maps, &teacher.attention, cfg.at_beta)?)
    } else {
        None
    };

    let total = if cfg.alpha == 0.0 {
        kd
    } else {
        let ce_term = tape.scale(ce, cfg.alpha)?;
        let kd_term = tape.scale(kd, 1.0 - cfg.alpha)?;
        tape.add(ce_term, kd_term)?
    };
    let total = match at {
        Some(at_var) => tape.add(total, at_var)?,
        None => total,
    };
    Ok(CompositeParts { total, ce, kd: Some(kd), at })
}

// ── evaluation-path loss values ─────────────────────────────────────────
//
// These run in f64 end to end (the training path stays f32 on the tape), so
// identities like kd(s, s, tau) == tau^2 * H(soften(s, tau)) hold to 1e-6
// even at high temperature.

/// Mean cross-entropy in f64, for metrics.
pub fn ce_value(logits: &Tensor, labels: &[u32]) -> Result<f64> {
    let lsm = ops::log_softmax_rows_f64(logits, 1.0)?;
    let k = logits.shape()[1];
    let mut total = 0.0f64;
    for (i, &lab) in labels.iter().enumerate() {
        if lab as usize >= k {
            return Err(Error::data(format!(
                "ce_value: label {lab} out of range [0, {k}) at row {i}"
            )));
        }
        total += -lsm[i * k + lab as usize];
    }
    Ok(total / labels.len() as f64)
}

/// Distillation loss value in f64 with the same tau^2 convention as training.
pub fn kd_value(student_logits: &Tensor, teacher_logits: &Tensor, tau: f32) -> Result<f64> {
    if student_logits.shape() != teacher_logits.shape() {
        return Err(Error::dimension(format!(
            "kd_value: student {:?} vs teacher {:?}",
            student_logits.shape(),
            teacher_logits.shape()
        )));
    }
    let targets = ops::softmax_rows_f64(teacher_logits, tau)?;
    let lsm = ops::log_softmax_rows_f64(student_logits, tau)?;
    let (n, k) = (student_logits.shape()[0], student_logits.shape()[1]);
    // Mean over samples of the per-sample term, accumulated row by row so the
    // value is independent of how the batch was chunked.
    let mut total = 0.0f64;
    for row in 0..n {
        let mut dot = 0.0f64;
        for j in 0..k {
            dot += targets[row * k + j] * lsm[row * k + j];
        }
        total += -f64::from(tau) * f64::from(tau) * dot;
    }
    Ok(total / n as f64)
}
