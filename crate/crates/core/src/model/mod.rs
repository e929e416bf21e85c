//! The instrumented target transformer, its fine-tuning loop and
//! checkpoints.

pub mod checkpoint;
mod config;
mod train;
mod transformer;

pub use config::{Granularity, ModelConfig, TaskHead};
pub use train::{evaluate, fine_tune, pretrain, EpochStats, Evaluation, FineTuneConfig, PretrainConfig};
pub use transformer::{
    group_names, param_specs, BackwardProperties, InstrumentedForward, ParamSpec, TargetModel, INIT_STD,
    LAYER_NORM_EPS,
};
