use serde::{Deserialize, Serialize};

use super::{ExtractMode, PropertyRecord};
use crate::error::{Error, Result};

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-feature z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column, with the
    /// standard deviation floored at [`STD_FLOOR`].
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("standardization input"))?;
        let width = first.len();
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Layout(format!("row width {} differs from {width}", r.len())));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::Layout(format!("expected {} features, got {}", self.width(), row.len())));
        }
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// A branch's features: a long `sequence` part that goes through the
/// convolutional path and a short `scalars` part that joins after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub sequence: Vec<f64>,
    pub scalars: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub sequence: Standardizer,
    pub scalars: Standardizer,
}

impl BlockStats {
    fn fit(blocks: &[FeatureBlock]) -> Result<Self> {
        let seq: Vec<&[f64]> = blocks.iter().map(|b| b.sequence.as_slice()).collect();
        let sc: Vec<&[f64]> = blocks.iter().map(|b| b.scalars.as_slice()).collect();
        Ok(Self {
            sequence: Standardizer::fit(&seq)?,
            scalars: Standardizer::fit(&sc)?,
        })
    }

    fn apply(&self, b: &FeatureBlock) -> Result<FeatureBlock> {
        Ok(FeatureBlock {
            sequence: self.sequence.apply(&b.sequence)?,
            scalars: self.scalars.apply(&b.scalars)?,
        })
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.sequence.width(), self.scalars.width())
    }
}

/// Feature ordering and standardization statistics, fit on audit-train.
///
/// Forward block: `sequence` = pooled outputs of the selected modules in
/// ascending module order; `scalars` = logits, then length and one-hot
/// label. Backward block: `sequence` = last attention gradient;
/// `scalars` = group gradient norms, then loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub mode: ExtractMode,
    /// Selected module indices (sorted, deduplicated).
    pub forward_layers: Vec<usize>,
    pub forward: Option<BlockStats>,
    pub backward: Option<BlockStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedRecord {
    pub forward: Option<FeatureBlock>,
    pub backward: Option<FeatureBlock>,
}

fn forward_raw(r: &PropertyRecord, layers: &[usize]) -> Result<FeatureBlock> {
    let f = r
        .forward
        .as_ref()
        .ok_or_else(|| Error::Layout(format!("sample {} has no forward properties", r.sample_id)))?;
    let mut sequence = Vec::new();
    for &l in layers {
        let m = f.module_pooled.get(l).ok_or_else(|| {
            Error::Layout(format!("module {l} selected but record has {} modules", f.module_pooled.len()))
        })?;
        sequence.extend_from_slice(m);
    }
    let scalars = f.logits.iter().chain(&f.summary).copied().collect();
    Ok(FeatureBlock { sequence, scalars })
}

fn backward_raw(r: &PropertyRecord) -> Result<FeatureBlock> {
    let b = r
        .backward
        .as_ref()
        .ok_or_else(|| Error::Layout(format!("sample {} has no backward properties", r.sample_id)))?;
    let mut scalars = b.group_norms.clone();
    scalars.push(b.loss);
    Ok(FeatureBlock {
        sequence: b.last_attention_grad.clone(),
        scalars,
    })
}

/// Fits the alignment on audit-train records. `forward_layers = None`
/// selects the last module only.
pub fn fit_alignment(records: &[PropertyRecord], mode: ExtractMode, forward_layers: Option<&[usize]>) -> Result<AlignmentConfig> {
    let first = records.first().ok_or(Error::Empty("alignment input"))?;
    let forward_layers = if mode.forward() {
        let n_modules = first
            .forward
            .as_ref()
            .ok_or_else(|| Error::Layout("forward mode requires forward properties".into()))?
            .module_pooled
            .len();
        let mut layers = match forward_layers {
            Some(l) if !l.is_empty() => l.to_vec(),
            _ => vec![n_modules - 1],
        };
        layers.sort_unstable();
        layers.dedup();
        layers
    } else {
        Vec::new()
    };
    let forward = if mode.forward() {
        let blocks = records.iter().map(|r| forward_raw(r, &forward_layers)).collect::<Result<Vec<_>>>()?;
        Some(BlockStats::fit(&blocks)?)
    } else {
        None
    };
    let backward = if mode.backward() {
        let blocks = records.iter().map(backward_raw).collect::<Result<Vec<_>>>()?;
        Some(BlockStats::fit(&blocks)?)
    } else {
        None
    };
    Ok(AlignmentConfig {
        mode,
        forward_layers,
        forward,
        backward,
    })
}

pub fn align(record: &PropertyRecord, config: &AlignmentConfig) -> Result<AlignedRecord> {
    let forward = match &config.forward {
        Some(stats) => Some(stats.apply(&forward_raw(record, &config.forward_layers)?)?),
        None => None,
    };
    let backward = match &config.backward {
        Some(stats) => Some(stats.apply(&backward_raw(record)?)?),
        None => None,
    };
    Ok(AlignedRecord { forward, backward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackwardProperties;
    use crate::property::ForwardProperties;

    fn record(id: u64, x: f64) -> PropertyRecord {
        PropertyRecord {
            sample_id: id,
            forward: Some(ForwardProperties {
                module_pooled: vec![vec![x, 1.0], vec![2.0 * x, 3.0]],
                logits: vec![x, -x],
                summary: vec![4.0, 1.0, 0.0],
                loss: x * x,
            }),
            backward: Some(BackwardProperties {
                last_attention_grad: vec![x, x + 1.0, 7.0],
                group_norms: vec![x.abs(), 1.0],
                loss: x * x,
            }),
        }
    }

    #[test]
    fn constant_column_is_floored_to_zero() {
        let recs: Vec<_> = (0..5).map(|i| record(i, i as f64)).collect();
        let cfg = fit_alignment(&recs, ExtractMode::Both, None).unwrap();
        let b = cfg.backward.as_ref().unwrap();
        assert_eq!(b.sequence.std[2], STD_FLOOR);
        let a = align(&recs[3], &cfg).unwrap();
        assert_eq!(a.backward.unwrap().sequence[2], 0.0);
    }

    #[test]
    fn single_record_aligns_to_zero() {
        let recs = vec![record(0, 0.7)];
        let cfg = fit_alignment(&recs, ExtractMode::Both, None).unwrap();
        let a = align(&recs[0], &cfg).unwrap();
        let f = a.forward.unwrap();
        let b = a.backward.unwrap();
        assert!(f.sequence.iter().chain(&f.scalars).chain(&b.sequence).chain(&b.scalars).all(|&v| v == 0.0));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(fit_alignment(&[], ExtractMode::Both, None), Err(Error::Empty(_))));
    }

    #[test]
    fn default_selection_is_last_module() {
        let cfg = fit_alignment(&[record(0, 1.0), record(1, 2.0)], ExtractMode::Forward, None).unwrap();
        assert_eq!(cfg.forward_layers, vec![1]);
        assert_eq!(cfg.forward.unwrap().widths(), (2, 5));
        assert!(cfg.backward.is_none());
    }

    #[test]
    fn missing_branch_is_a_layout_error() {
        let cfg = fit_alignment(&[record(0, 1.0), record(1, 2.0)], ExtractMode::Both, None).unwrap();
        let mut r = record(2, 3.0);
        r.backward = None;
        assert!(matches!(align(&r, &cfg), Err(Error::Layout(_))));
        let mut r = record(3, 3.0);
        r.backward.as_mut().unwrap().last_attention_grad.push(0.0);
        assert!(matches!(align(&r, &cfg), Err(Error::Layout(_))));
    }
}
