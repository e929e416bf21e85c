//! Membership-inference metrics: ROC, AUC, TPR at a fixed FPR, balanced
//! accuracy, peak tracking and replicate statistics.

mod export;

use serde::{Deserialize, Serialize};

pub use export::{fmt_f64, read_roc_csv, write_roc_csv, RocSidecar};

use crate::error::{Error, Result};

/// False-positive rate at which TPR is headlined.
pub const LOW_FPR: f64 = 0.1;

/// Attack scores with membership labels (1 = member). Higher scores mean
/// "more likely a member".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Config(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidLabel(format!("membership label {l}")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite { what: "attack score".into() });
        }
        Ok(Self { scores, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Step ROC: one point per distinct-score threshold group, from (0, 0) to
/// (1, 1). Counts are kept so that derived quantities are exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub false_positives: Vec<usize>,
    pub true_positives: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.fpr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fpr.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fpr.iter().copied().zip(self.tpr.iter().copied())
    }
}

/// Sweeps the threshold from above the maximum score down through every
/// distinct score; tied scores flip together.
pub fn roc(set: &ScoreSet) -> Result<RocCurve> {
    let (p, n) = (set.positives(), set.negatives());
    if p == 0 || n == 0 {
        return Err(Error::Config(format!("ROC needs both classes, got {p} members and {n} non-members")));
    }
    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut tps = vec![0];
    let mut fps = vec![0];
    let mut i = 0;
    while i < order.len() {
        let s = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == s {
            if set.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        tps.push(tp);
        fps.push(fp);
    }
    Ok(RocCurve {
        fpr: fps.iter().map(|&f| f as f64 / n as f64).collect(),
        tpr: tps.iter().map(|&t| t as f64 / p as f64).collect(),
        false_positives: fps,
        true_positives: tps,
        positives: p,
        negatives: n,
    })
}

/// Trapezoidal area under the curve, accumulated in integer counts so it
/// equals the Mann-Whitney statistic with half credit for ties.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut twice_area: u128 = 0;
    for w in 1..curve.len() {
        let dfp = (curve.false_positives[w] - curve.false_positives[w - 1]) as u128;
        let tsum = (curve.true_positives[w] + curve.true_positives[w - 1]) as u128;
        twice_area += dfp * tsum;
    }
    twice_area as f64 / (2.0 * curve.positives as f64 * curve.negatives as f64)
}

/// Largest TPR among curve points with FPR at most `target_fpr`; no
/// interpolation.
pub fn tpr_at_fpr(curve: &RocCurve, target_fpr: f64) -> f64 {
    curve
        .points()
        .filter(|&(f, _)| f <= target_fpr)
        .map(|(_, t)| t)
        .fold(0.0, f64::max)
}

/// `(TPR + TNR) / 2` of hard decisions.
pub fn balanced_accuracy(decisions: &[u8], labels: &[u8]) -> Result<f64> {
    if decisions.len() != labels.len() {
        return Err(Error::Config(format!("{} decisions for {} labels", decisions.len(), labels.len())));
    }
    let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
    for (&d, &l) in decisions.iter().zip(labels) {
        if l == 1 {
            p += 1;
            tp += usize::from(d == 1);
        } else {
            n += 1;
            tn += usize::from(d == 0);
        }
    }
    if p == 0 || n == 0 {
        return Err(Error::Config("balanced accuracy needs both classes".into()));
    }
    Ok((tp as f64 / p as f64 + tn as f64 / n as f64) / 2.0)
}

/// Best balanced accuracy over all thresholds of the curve. Reported
/// separately; never a headline number.
pub fn best_threshold_balanced_accuracy(curve: &RocCurve) -> f64 {
    curve.points().map(|(f, t)| (t + 1.0 - f) / 2.0).fold(0.0, f64::max)
}

/// Headline metrics of one attack on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub balanced_accuracy: f64,
    pub auc: f64,
    pub tpr_at_fpr_0_1: f64,
    pub best_threshold_balanced_accuracy: f64,
}

impl AttackMetrics {
    /// Metrics from scores and the decisions the attack actually made.
    pub fn compute(set: &ScoreSet, decisions: &[u8]) -> Result<(Self, RocCurve)> {
        let curve = roc(set)?;
        let m = Self {
            balanced_accuracy: balanced_accuracy(decisions, &set.labels)?,
            auc: auc(&curve),
            tpr_at_fpr_0_1: tpr_at_fpr(&curve, LOW_FPR),
            best_threshold_balanced_accuracy: best_threshold_balanced_accuracy(&curve),
        };
        Ok((m, curve))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub value: f64,
}

/// First maximum of a trajectory.
pub fn peak(values: &[f64]) -> Option<Peak> {
    values.iter().enumerate().fold(None, |best: Option<Peak>, (index, &value)| match best {
        Some(b) if b.value >= value => Some(b),
        _ => Some(Peak { index, value }),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one value.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(MeanStd { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(members: &[f64], non: &[f64]) -> ScoreSet {
        let scores = members.iter().chain(non).copied().collect();
        let labels = members.iter().map(|_| 1).chain(non.iter().map(|_| 0)).collect();
        ScoreSet::new(scores, labels).unwrap()
    }

    #[test]
    fn separated_scores() {
        let c = roc(&set(&[0.9, 0.8, 0.7], &[0.6, 0.5, 0.4])).unwrap();
        assert!(c.points().any(|p| p == (0.0, 1.0)));
        assert_eq!(auc(&c), 1.0);
        assert_eq!(tpr_at_fpr(&c, 0.01), 1.0);
    }

    #[test]
    fn all_equal_scores_give_diagonal() {
        let c = roc(&set(&[0.3, 0.3], &[0.3, 0.3, 0.3])).unwrap();
        assert_eq!(c.points().collect::<Vec<_>>(), vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(roc(&set(&[0.1, 0.2], &[])).is_err());
        assert!(balanced_accuracy(&[1, 0], &[1, 1]).is_err());
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap(), 0.5);
        let labels = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let decisions = [1, 1, 1, 1, 0, 0, 0, 0, 1, 1];
        assert!((balanced_accuracy(&decisions, &labels).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn peaks() {
        assert_eq!(peak(&[0.4]), Some(Peak { index: 0, value: 0.4 }));
        assert_eq!(peak(&[0.1, 0.2, 0.3]).unwrap().index, 2);
        assert_eq!(peak(&[0.5, 0.7, 0.6]), Some(Peak { index: 1, value: 0.7 }));
        assert_eq!(peak(&[]), None);
    }

    #[test]
    fn mean_std_uses_sample_denominator() {
        let m = mean_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]).unwrap().std, 0.0);
    }
}
