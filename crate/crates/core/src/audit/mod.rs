//! The contrastive audit model: per-branch embedding generators over
//! aligned forward and backward features, the asymmetric contrastive
//! objective, and a membership classifier trained jointly with it.

mod loss;
mod model;
pub(crate) mod network;

pub use loss::{
    combined_loss, combined_loss_value, concentration_from_distances, difference_from_distances, loss_d,
    loss_d_value, loss_s, loss_s_value, mu,
};
pub use model::{
    decide, train_audit_model, AuditConfig, AuditModel, AuditTrainLog, EpochLoss, Inference, LossTerms, BCE_CLIP,
    DECISION_THRESHOLD,
};
