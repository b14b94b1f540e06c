//! Run configuration: strict JSON with unknown-key rejection, fully validated
//! before any compute starts. A config re-emitted from a record directory
//! re-parses to an equal config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use distillab_core::cifar::load_small_image_binary;
use distillab_core::data::{
    gen_gaussian_mixture, gen_patterned_images, AugmentPolicy, ChannelNorm, Provenance, Split,
};
use distillab_core::{
    DistillConfig, Error, Family, ModelSpec, Result, ScheduleSpec, TrainData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineChoice {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetBlock {
    GaussianMixture {
        classes: usize,
        dims: usize,
        per_class_train: usize,
        per_class_test: usize,
        spread: f32,
        seed: u64,
    },
    PatternedImages {
        classes: usize,
        height: usize,
        width: usize,
        per_class_train: usize,
        per_class_test: usize,
        noise: f32,
        seed: u64,
    },
    SmallImageBinary {
        train_files: Vec<PathBuf>,
        test_files: Vec<PathBuf>,
    },
}

/// A model description in a config; input shape and class count come from the
/// dataset, the init seed from the per-seed derivations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub family: Family,
    pub depth_factor: usize,
    pub width_factor: usize,
}

impl ModelBlock {
    pub fn to_spec(&self, input_shape: Vec<usize>, num_classes: usize) -> ModelSpec {
        ModelSpec {
            family: self.family,
            depth_factor: self.depth_factor,
            width_factor: self.width_factor,
            input_shape,
            num_classes,
            init_seed: 0,
        }
    }
}

fn default_batch_size() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: DatasetBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_ladder: Option<Vec<ModelBlock>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medium: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small: Option<ModelBlock>,
    #[serde(default = "DistillConfig::default")]
    pub distill: DistillConfig,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_schedule: Option<ScheduleSpec>,
    /// Early-stopped teacher length (shrunk schedule), for es_teacher_kd and
    /// train-teacher.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_short: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f32>>,
    #[serde(default)]
    pub include_eskd_cells: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_checkpoints: Option<Vec<PathBuf>>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentPolicy>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn require<'a, T>(field: Option<&'a T>, key: &str, why: &str) -> Result<&'a T> {
        field.ok_or_else(|| Error::config(format!("missing key `{key}`: {why}")))
    }

    /// Cross-field validation; every error names the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("`seeds` must list at least one seed".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::config("`batch_size` must be >= 1".to_string()));
        }
        self.distill
            .validate()
            .map_err(|e| Error::config(format!("`distill`: {e}")))?;
        self.schedule
            .validate()
            .map_err(|e| Error::config(format!("`schedule`: {e}")))?;
        if let Some(ts) = &self.teacher_schedule {
            ts.validate().map_err(|e| Error::config(format!("`teacher_schedule`: {e}")))?;
        }
        if let Some(switch) = self.distill.switch_epoch {
            if switch > self.schedule.total_epochs {
                return Err(Error::config(format!(
                    "`distill.switch_epoch` {switch} exceeds `schedule.total_epochs` {}",
                    self.schedule.total_epochs
                )));
            }
        }
        match &self.dataset {
            DatasetBlock::GaussianMixture { classes, dims, per_class_train, per_class_test, spread, .. } => {
                if *classes < 2 || *dims == 0 || *per_class_train == 0 || *per_class_test == 0 {
                    return Err(Error::config(
                        "`dataset`: classes >= 2 and dims/per_class_* >= 1 required".to_string(),
                    ));
                }
                if !(*spread > 0.0) {
                    return Err(Error::config("`dataset.spread` must be > 0".to_string()));
                }
            }
            DatasetBlock::PatternedImages { classes, height, width, per_class_train, per_class_test, noise, .. } => {
                if *classes < 2 || *per_class_train == 0 || *per_class_test == 0 {
                    return Err(Error::config(
                        "`dataset`: classes >= 2 and per_class_* >= 1 required".to_string(),
                    ));
                }
                if *height < 8 || *width < 8 {
                    return Err(Error::config("`dataset`: height and width must be >= 8".to_string()));
                }
                if *noise < 0.0 {
                    return Err(Error::config("`dataset.noise` must be >= 0".to_string()));
                }
            }
            DatasetBlock::SmallImageBinary { train_files, test_files } => {
                if train_files.is_empty() || test_files.is_empty() {
                    return Err(Error::config(
                        "`dataset.train_files` and `dataset.test_files` must be nonempty".to_string(),
                    ));
                }
            }
        }

        let needs_single_teacher = matches!(
            self.pipeline,
            PipelineChoice::FullKd | PipelineChoice::Eskd | PipelineChoice::EsTeacherKd | PipelineChoice::Ablation
        );
        match self.pipeline {
            PipelineChoice::Scratch | PipelineChoice::SequentialKd => {
                Self::require(self.student.as_ref(), "student", "this pipeline trains a student")?;
            }
            _ if needs_single_teacher => {
                Self::require(self.student.as_ref(), "student", "this pipeline trains a student")?;
                if self.teacher.is_none() && self.teacher_checkpoint.is_none() {
                    return Err(Error::config(
                        "missing key `teacher` or `teacher_checkpoint`: this pipeline distills from one teacher"
                            .to_string(),
                    ));
                }
                if self.pipeline == PipelineChoice::EsTeacherKd {
                    if self.teacher.is_none() {
                        return Err(Error::config(
                            "missing key `teacher`: es_teacher_kd trains its teacher on a shortened schedule"
                                .to_string(),
                        ));
                    }
                    Self::require(self.n_short.as_ref(), "n_short", "length of the early-stopped teacher schedule")?;
                }
            }
            PipelineChoice::Sweep => {
                Self::require(self.student.as_ref(), "student", "the sweep distills a fixed student")?;
                let ladder = Self::require(self.teacher_ladder.as_ref(), "teacher_ladder", "the capacity ladder")?;
                if ladder.len() < 3 {
                    return Err(Error::config("`teacher_ladder` needs at least 3 rungs".to_string()));
                }
            }
            PipelineChoice::StepwiseKd => {
                Self::require(self.large.as_ref(), "large", "step-wise distillation takes large/medium/small")?;
                Self::require(self.medium.as_ref(), "medium", "step-wise distillation takes large/medium/small")?;
                Self::require(self.small.as_ref(), "small", "step-wise distillation takes large/medium/small")?;
            }
            PipelineChoice::EnsembleEval => {
                let ckpts = Self::require(
                    self.ensemble_checkpoints.as_ref(),
                    "ensemble_checkpoints",
                    "ensemble evaluation loads existing checkpoints",
                )?;
                if ckpts.is_empty() {
                    return Err(Error::config("`ensemble_checkpoints` must be nonempty".to_string()));
                }
            }
            _ => {}
        }
        if self.pipeline == PipelineChoice::SequentialKd {
            let gens = Self::require(self.generations.as_ref(), "generations", "chain length")?;
            if *gens == 0 {
                return Err(Error::config("`generations` must be >= 1".to_string()));
            }
        }
        if self.pipeline == PipelineChoice::Ablation {
            let alphas = Self::require(self.alphas.as_ref(), "alphas", "ablation grid axis")?;
            let taus = Self::require(self.taus.as_ref(), "taus", "ablation grid axis")?;
            if alphas.is_empty() || taus.is_empty() {
                return Err(Error::config("`alphas` and `taus` must be nonempty".to_string()));
            }
        }
        if let Some(n_short) = self.n_short {
            if n_short < 6 {
                return Err(Error::config("`n_short` must be >= 6".to_string()));
            }
        }
        if let Some(aug) = self.augment {
            let image_data = !matches!(self.dataset, DatasetBlock::GaussianMixture { .. });
            if aug != AugmentPolicy::None && !image_data {
                return Err(Error::config(
                    "`augment`: pad_crop_flip requires image-shaped data".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Effective teacher training schedule.
    pub fn teacher_schedule(&self) -> &ScheduleSpec {
        self.teacher_schedule.as_ref().unwrap_or(&self.schedule)
    }

    /// Materializes the dataset pair and wraps it with the training knobs.
    pub fn build_data(&self) -> Result<TrainData> {
        let (train, test) = match &self.dataset {
            DatasetBlock::GaussianMixture { classes, dims, per_class_train, per_class_test, spread, seed } => (
                gen_gaussian_mixture(*classes, *dims, *per_class_train, *spread, *seed, Split::Train)?,
                gen_gaussian_mixture(*classes, *dims, *per_class_test, *spread, *seed, Split::Test)?,
            ),
            DatasetBlock::PatternedImages { classes, height, width, per_class_train, per_class_test, noise, seed } => (
                gen_patterned_images(*classes, *height, *width, *per_class_train, *noise, *seed, Split::Train)?,
                gen_patterned_images(*classes, *height, *width, *per_class_test, *noise, *seed, Split::Test)?,
            ),
            DatasetBlock::SmallImageBinary { train_files, test_files } => {
                let train = load_small_image_binary(train_files, Split::Train, None)?;
                let norm: ChannelNorm = match train.provenance() {
                    Provenance::SmallImageFile { normalization, .. } => normalization.clone(),
                    _ => unreachable!("loader provenance"),
                };
                let test = load_small_image_binary(test_files, Split::Test, Some(norm))?;
                (train, test)
            }
        };
        Ok(TrainData {
            train,
            test,
            batch_size: self.batch_size,
            augment: self.augment.unwrap_or(AugmentPolicy::None),
        })
    }

    /// Sample shape and class count the dataset will produce, without
    /// materializing it.
    pub fn io_shape(&self) -> (Vec<usize>, usize) {
        match &self.dataset {
            DatasetBlock::GaussianMixture { classes, dims, .. } => (vec![*dims], *classes),
            DatasetBlock::PatternedImages { classes, height, width, .. } => (vec![1, *height, *width], *classes),
            DatasetBlock::SmallImageBinary { .. } => (vec![3, 32, 32], 10),
        }
    }

    pub fn pipeline_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            match self.pipeline {
                PipelineChoice::Scratch => "scratch",
                PipelineChoice::FullKd => "full_kd",
                PipelineChoice::Eskd => "eskd",
                PipelineChoice::EsTeacherKd => "es_teacher_kd",
                PipelineChoice::SequentialKd => "sequential",
                PipelineChoice::StepwiseKd => "stepwise",
                PipelineChoice::EnsembleEval => "ensemble",
                PipelineChoice::Sweep => "sweep",
                PipelineChoice::Ablation => "ablation",
            }
            .to_string()
        })
    }
}
