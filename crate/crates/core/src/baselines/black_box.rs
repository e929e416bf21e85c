use serde::{Deserialize, Serialize};
use tensor::rng;
use tensor::{Adam, AdamConfig, Tape, Tensor, Var};

use crate::audit::network::{classifier_head, dense, stack};
use crate::audit::{decide, Inference, BCE_CLIP};
use crate::data::pairs::pair_indices;
use crate::error::{Error, Result};
use crate::property::{PropertyRecord, Standardizer};

/// Training budget; the orchestrator copies it from the audit model's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackBoxConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Replace every feature with zero (ablation).
    #[serde(default)]
    pub zero_features: bool,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 5e-4,
            epochs: 8,
            batch_size: 32,
            zero_features: false,
        }
    }
}

/// Sigmoid classifier over the standardized pooled last-module output
/// followed by the task logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxClassifier {
    config: BlackBoxConfig,
    standardizer: Standardizer,
    params: Vec<Tensor>,
}

fn raw_features(r: &PropertyRecord) -> Result<Vec<f64>> {
    let f = r
        .forward
        .as_ref()
        .ok_or_else(|| Error::Layout(format!("sample {} has no forward properties", r.sample_id)))?;
    let last = f.module_pooled.last().ok_or_else(|| Error::Layout("no module outputs".into()))?;
    Ok(last.iter().chain(&f.logits).copied().collect())
}

impl BlackBoxClassifier {
    fn features(&self, r: &PropertyRecord) -> Result<Vec<f64>> {
        let z = self.standardizer.apply(&raw_features(r)?)?;
        Ok(if self.config.zero_features { vec![0.0; z.len()] } else { z })
    }

    fn probs(&self, tape: &mut Tape, params: &[Var], rows: &[&[f64]]) -> Result<Var> {
        let width = self.standardizer.width();
        let x = tape.constant(stack(rows.iter().copied(), width)?);
        classifier_head(tape, x, params)
    }

    /// Trains on audit-train members and non-members with binary
    /// cross-entropy over nested-pair batches.
    pub fn train(members: &[PropertyRecord], non_members: &[PropertyRecord], config: &BlackBoxConfig, seed: u64) -> Result<Self> {
        if members.is_empty() || non_members.is_empty() {
            return Err(Error::Empty("black-box audit-train split"));
        }
        let raw_m = members.iter().map(raw_features).collect::<Result<Vec<_>>>()?;
        let raw_n = non_members.iter().map(raw_features).collect::<Result<Vec<_>>>()?;
        let rows: Vec<&[f64]> = raw_m.iter().chain(&raw_n).map(Vec::as_slice).collect();
        let standardizer = Standardizer::fit(&rows)?;
        let mut rng = rng::stream(seed, "black-box-init");
        let mut params = Vec::with_capacity(4);
        params.extend(dense(&mut rng, standardizer.width(), config.hidden));
        params.extend(dense(&mut rng, config.hidden, 1));
        let mut model = Self {
            config: config.clone(),
            standardizer,
            params,
        };
        let fm = members.iter().map(|r| model.features(r)).collect::<Result<Vec<_>>>()?;
        let fn_ = non_members.iter().map(|r| model.features(r)).collect::<Result<Vec<_>>>()?;

        let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &model.params);
        for epoch in 0..config.epochs {
            for batch in pair_indices(fm.len(), fn_.len(), config.batch_size, seed, epoch as u64)? {
                let g = batch.groups.len();
                let rows: Vec<&[f64]> = batch
                    .groups
                    .iter()
                    .map(|p| fm[p.member].as_slice())
                    .chain(batch.groups.iter().map(|p| fn_[p.non_member].as_slice()))
                    .collect();
                let labels: Vec<f64> = (0..2 * g).map(|i| if i < g { 1.0 } else { 0.0 }).collect();
                let mut tape = Tape::new();
                let p: Vec<Var> = model.params.iter().map(|t| tape.leaf(t.clone())).collect();
                let probs = model.probs(&mut tape, &p, &rows)?;
                let loss = tape.binary_cross_entropy(probs, &labels, BCE_CLIP)?;
                let grads = tape.backward(loss)?;
                let refs: Vec<Option<&[f64]>> = p.iter().map(|&v| grads.get(v)).collect();
                adam.step(&mut model.params, &refs)?;
            }
        }
        Ok(model)
    }

    pub fn scores(&self, records: &[PropertyRecord]) -> Result<Vec<f64>> {
        let feats = records.iter().map(|r| self.features(r)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.iter().map(|t| tape.constant(t.clone())).collect();
        let probs = self.probs(&mut tape, &p, &rows)?;
        Ok(tape.value(probs).data().to_vec())
    }

    pub fn infer(&self, record: &PropertyRecord) -> Result<Inference> {
        let score = self.scores(std::slice::from_ref(record))?[0];
        Ok(Inference {
            decision: decide(score),
            score,
        })
    }
}
