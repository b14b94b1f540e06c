//! Desk-scale knowledge-distillation laboratory.
//!
//! A self-contained training engine (dense/conv tensors with reverse-mode
//! differentiation), capacity-laddered model families, the temperature-
//! softened distillation objective with attention transfer, SGD schedules
//! including shrunk early-stopping variants, deterministic dataset supply,
//! and the experiment pipelines that compose them: capacity sweeps,
//! early-stopped distillation comparisons, sequential chains, step-wise
//! distillation and hyperparameter grids.

pub mod checkpoint;
pub mod cifar;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod ops;
pub mod optim;
pub mod orchestrator;
pub mod rng;
pub mod schedule;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use losses::DistillConfig;
pub use model::{Family, Model, ModelSpec};
pub use schedule::{lr_at, ScheduleMode, ScheduleSpec};
pub use tape::{Tape, VarId};
pub use tensor::Tensor;
pub use train::{evaluate, train, MetricLog, Metrics, TrainData};
