//! Per-sample white-box evidence and its alignment into fixed-width,
//! standardized feature blocks.

mod align;
mod cache;

use serde::{Deserialize, Serialize};

pub use align::{align, fit_alignment, AlignedRecord, AlignmentConfig, BlockStats, FeatureBlock, Standardizer, STD_FLOOR};
pub use cache::PropertyCache;
pub use crate::model::BackwardProperties;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{TargetModel, TaskHead};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    Forward,
    Backward,
    Both,
}

impl ExtractMode {
    pub fn forward(self) -> bool {
        matches!(self, Self::Forward | Self::Both)
    }

    pub fn backward(self) -> bool {
        matches!(self, Self::Backward | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardProperties {
    /// Each module output mean-pooled over the non-padding positions.
    pub module_pooled: Vec<Vec<f64>>,
    /// Task logits; next-token logits are mean-pooled over positions.
    pub logits: Vec<f64>,
    /// Sequence length followed by the one-hot task label.
    pub summary: Vec<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub sample_id: u64,
    pub forward: Option<ForwardProperties>,
    pub backward: Option<BackwardProperties>,
}

impl PropertyRecord {
    /// Task loss from whichever pass was recorded.
    pub fn loss(&self) -> f64 {
        match (&self.forward, &self.backward) {
            (Some(f), _) => f.loss,
            (None, Some(b)) => b.loss,
            (None, None) => f64::NAN,
        }
    }
}

fn mean_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let rows = data.len() / cols;
    let mut out = vec![0.0; cols];
    for r in data.chunks(cols) {
        out.iter_mut().zip(r).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= rows as f64);
    out
}

fn check_finite(values: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what() })
    }
}

/// Extracts forward and/or backward properties for one sample.
pub fn extract(model: &TargetModel, sample: &Sample, mode: ExtractMode) -> Result<PropertyRecord> {
    let forward = if mode.forward() {
        let f = model.forward_instrumented(&sample.tokens, sample.label)?;
        let d = model.config().d_model;
        let module_pooled: Vec<Vec<f64>> = f.module_outputs.iter().map(|o| mean_rows(o.data(), d)).collect();
        for (i, m) in module_pooled.iter().enumerate() {
            check_finite(m, || format!("forward output of module {i}"))?;
        }
        let logits = match model.config().task {
            TaskHead::Classification { .. } => f.logits.data().to_vec(),
            TaskHead::NextToken => mean_rows(f.logits.data(), f.logits.shape()[1]),
        };
        check_finite(&logits, || "task logits".into())?;
        let n_classes = model.config().n_classes();
        let mut summary = vec![0.0; 1 + n_classes];
        summary[0] = sample.content().len() as f64;
        if n_classes > 0 {
            summary[1 + sample.label] = 1.0;
        }
        Some(ForwardProperties {
            module_pooled,
            logits,
            summary,
            loss: f.loss,
        })
    } else {
        None
    };
    let backward = if mode.backward() {
        let b = model.backward_properties(&sample.tokens, sample.label)?;
        check_finite(&b.last_attention_grad, || "last attention gradient".into())?;
        check_finite(&b.group_norms, || "gradient norms".into())?;
        Some(b)
    } else {
        None
    };
    Ok(PropertyRecord {
        sample_id: sample.id,
        forward,
        backward,
    })
}

pub fn extract_all<'a>(
    model: &TargetModel,
    samples: impl IntoIterator<Item = &'a Sample>,
    mode: ExtractMode,
) -> Result<Vec<PropertyRecord>> {
    samples.into_iter().map(|s| extract(model, s, mode)).collect()
}
