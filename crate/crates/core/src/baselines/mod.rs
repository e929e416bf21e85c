//! Comparison attacks: a loss threshold and a black-box classifier over the
//! last layer's pooled output and logits. Neither reads backward
//! properties.

mod black_box;

use serde::{Deserialize, Serialize};

pub use black_box::{BlackBoxClassifier, BlackBoxConfig};

use crate::error::{Error, Result};
use crate::metrics::balanced_accuracy;
use crate::property::PropertyRecord;

/// Member if `-loss >= tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossThreshold {
    pub tau: f64,
}

impl LossThreshold {
    pub fn score(loss: f64) -> f64 {
        -loss
    }

    /// Picks `tau` maximizing balanced accuracy on audit-train among the
    /// midpoints between consecutive distinct scores and the two
    /// open-ended thresholds. Ties keep the smallest `tau`.
    pub fn fit(member_losses: &[f64], non_member_losses: &[f64]) -> Result<Self> {
        if member_losses.is_empty() || non_member_losses.is_empty() {
            return Err(Error::Empty("loss-threshold audit-train split"));
        }
        let scores: Vec<f64> = member_losses.iter().chain(non_member_losses).map(|&l| Self::score(l)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite { what: "audit-train loss".into() });
        }
        let labels: Vec<u8> = member_losses.iter().map(|_| 1).chain(non_member_losses.iter().map(|_| 0)).collect();
        let mut distinct = scores.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut candidates = vec![f64::NEG_INFINITY];
        candidates.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        candidates.push(f64::INFINITY);

        let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for tau in candidates {
            let decisions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= tau)).collect();
            let ba = balanced_accuracy(&decisions, &labels)?;
            if ba > best.1 {
                best = (tau, ba);
            }
        }
        Ok(Self { tau: best.0 })
    }

    pub fn decide_score(&self, score: f64) -> u8 {
        u8::from(score >= self.tau)
    }

    pub fn decide(&self, record: &PropertyRecord) -> u8 {
        self.decide_score(Self::score(record.loss()))
    }
}
