//! White-box membership-inference auditing of a fine-tuned transformer.
//!
//! The pipeline fine-tunes a small instrumented [`model::TargetModel`] on a
//! synthetic text task and, at checkpoints, trains a contrastive audit
//! model on forward and backward evidence to tell fine-tuning members from
//! held-out samples. Two baselines and the usual membership-inference
//! metrics are included; [`orchestrator::run_audit`] ties it together.

pub mod audit;
pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod orchestrator;
pub mod property;

pub use error::{Error, Result};
