//! Learning-rate schedules and optimizer constants.
//!
//! Four modes: fixed-interval step decay, the shrunk step decay used for
//! early-stopped teachers (interval = floor((n - 5) / 3)), explicit drop
//! epochs, and a cosine ramp. Presets pin the constants used throughout the
//! experiment suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleMode {
    /// Multiply by drop_factor every `drop_every` epochs.
    Step { drop_every: usize },
    /// Step decay with interval floor((total_epochs - 5) / 3).
    ShrunkStep,
    /// Multiply by drop_factor at each listed epoch.
    ExplicitDrops { drop_epochs: Vec<usize> },
    /// initial_lr * 0.5 * (1 + cos(pi * epoch / total_epochs)).
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub total_epochs: usize,
    pub mode: ScheduleMode,
    pub initial_lr: f64,
    pub drop_factor: f64,
    pub momentum: f32,
    pub nesterov: bool,
    pub weight_decay: f32,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::parameter("total_epochs must be >= 1".to_string()));
        }
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::parameter(format!(
                "initial_lr must be > 0, got {}",
                self.initial_lr
            )));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor <= 1.0) {
            return Err(Error::parameter(format!(
                "drop_factor must be in (0, 1], got {}",
                self.drop_factor
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::parameter(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::parameter(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        match &self.mode {
            ScheduleMode::Step { drop_every } => {
                if *drop_every == 0 {
                    return Err(Error::parameter("drop_every must be >= 1".to_string()));
                }
            }
            ScheduleMode::ExplicitDrops { drop_epochs } => {
                for pair in drop_epochs.windows(2) {
                    if pair[0] >= pair[1] {
                        return Err(Error::parameter(format!(
                            "drop_epochs must be strictly increasing: {drop_epochs:?}"
                        )));
                    }
                }
                if drop_epochs.iter().any(|&e| e == 0 || e >= self.total_epochs) {
                    return Err(Error::parameter(format!(
                        "drop_epochs must lie in [1, total_epochs): {drop_epochs:?}"
                    )));
                }
            }
            ScheduleMode::ShrunkStep | ScheduleMode::Cosine => {}
        }
        Ok(())
    }

    /// The shrunk-schedule step interval; 0 means no drops fit.
    pub fn shrunk_interval(total_epochs: usize) -> usize {
        total_epochs.saturating_sub(5) / 3
    }

    /// First epoch at which the learning rate drops, if the mode has drops.
    /// The default distillation switch epoch ties to this.
    pub fn first_drop_epoch(&self) -> Option<usize> {
        match &self.mode {
            ScheduleMode::Step { drop_every } if *drop_every < self.total_epochs => Some(*drop_every),
            ScheduleMode::Step { .. } => None,
            ScheduleMode::ShrunkStep => {
                let k = Self::shrunk_interval(self.total_epochs);
                (k >= 1 && k < self.total_epochs).then_some(k)
            }
            ScheduleMode::ExplicitDrops { drop_epochs } => drop_epochs.first().copied(),
            ScheduleMode::Cosine => None,
        }
    }

    /// Step-decay preset: 200 epochs at lr 0.1, dropping 0.2 every 60,
    /// momentum 0.9, weight decay 5e-4.
    pub fn cifar_preset() -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: 200,
            mode: ScheduleMode::Step { drop_every: 60 },
            initial_lr: 0.1,
            drop_factor: 0.2,
            momentum: 0.9,
            nesterov: false,
            weight_decay: 5e-4,
        }
    }

    /// Large-scale preset: 90 epochs at lr 0.1, dropping 0.1 every 30,
    /// nesterov momentum 0.9, weight decay 1e-4.
    pub fn imagenet_preset() -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: 90,
            mode: ScheduleMode::Step { drop_every: 30 },
            initial_lr: 0.1,
            drop_factor: 0.1,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 1e-4,
        }
    }

    /// Early-stopped large-scale presets: drops at (15, 25, 30) for 35 total
    /// epochs, or (20, 35, 45) for 50.
    pub fn imagenet_es_preset(total_epochs: usize) -> Result<ScheduleSpec> {
        let drop_epochs = match total_epochs {
            35 => vec![15, 25, 30],
            50 => vec![20, 35, 45],
            other => {
                return Err(Error::parameter(format!(
                    "no early-stopped preset for {other} epochs (have 35, 50)"
                )))
            }
        };
        Ok(ScheduleSpec {
            total_epochs,
            mode: ScheduleMode::ExplicitDrops { drop_epochs },
            ..Self::imagenet_preset()
        })
    }
}

/// Learning rate at an epoch. Positive and non-increasing for the step,
/// shrunk and explicit modes.
pub fn lr_at(spec: &ScheduleSpec, epoch: usize) -> Result<f64> {
    spec.validate()?;
    if epoch >= spec.total_epochs {
        return Err(Error::parameter(format!(
            "epoch {epoch} out of range [0, {})",
            spec.total_epochs
        )));
    }
    let lr = match &spec.mode {
        ScheduleMode::Step { drop_every } => {
            spec.initial_lr * spec.drop_factor.powi((epoch / drop_every) as i32)
        }
        ScheduleMode::ShrunkStep => {
            let k = ScheduleSpec::shrunk_interval(spec.total_epochs);
            if k == 0 {
                // Too few epochs for any drop; constant learning rate.
                spec.initial_lr
            } else {
                spec.initial_lr * spec.drop_factor.powi((epoch / k) as i32)
            }
        }
        ScheduleMode::ExplicitDrops { drop_epochs } => {
            let drops = drop_epochs.iter().filter(|&&d| d <= epoch).count();
            spec.initial_lr * spec.drop_factor.powi(drops as i32)
        }
        ScheduleMode::Cosine => {
            spec.initial_lr
                * 0.5
                * (1.0 + (std::f64::consts::PI * epoch as f64 / spec.total_epochs as f64).cos())
        }
    };
    if !(lr > 0.0) {
        return Err(Error::numeric(format!("learning rate underflowed at epoch {epoch}")));
    }
    Ok(lr)
}

/// Shortened teacher schedule: shrunk step decay over `n_short` epochs with
/// the base schedule's learning-rate constants.
pub fn early_stopped_teacher(base: &ScheduleSpec, n_short: usize) -> Result<ScheduleSpec> {
    base.validate()?;
    if n_short < 6 {
        return Err(Error::parameter(format!(
            "early-stopped schedule needs at least 6 epochs, got {n_short}"
        )));
    }
    if n_short >= base.total_epochs {
        return Err(Error::parameter(format!(
            "early stop at {n_short} does not shorten a {}-epoch schedule",
            base.total_epochs
        )));
    }
    Ok(ScheduleSpec {
        total_epochs: n_short,
        mode: ScheduleMode::ShrunkStep,
        ..base.clone()
    })
}
