use serde::{Deserialize, Serialize};
use tensor::rng;
use tensor::{Adam, AdamConfig, Tape, Tensor, Var};

use super::loss::{self, mu};
use super::network::{classifier_head, dense, linear, stack, WEIGHT_STD};
use crate::data::pairs::pair_indices;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{checkpoint, TargetModel};
use crate::property::{align, extract, AlignedRecord, AlignmentConfig, ExtractMode, FeatureBlock, PropertyRecord};

/// Scores at or above this are decided "member".
pub const DECISION_THRESHOLD: f64 = 0.5;
/// Probabilities are clipped to `[BCE_CLIP, 1 - BCE_CLIP]` inside the log.
pub const BCE_CLIP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Weight of the forward half of the embedding.
    pub lambda: f64,
    pub margin: f64,
    pub mu0: f64,
    pub decay_k: f64,
    /// Weight of the classification loss.
    pub nu: f64,
    /// Width of each branch embedding; the joint embedding is twice this.
    pub embed_dim: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Length the convolution output is average-pooled to.
    pub pool_len: usize,
    pub generator_hidden: usize,
    pub classifier_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Samples per nested-pair batch (two per group).
    pub batch_size: usize,
    pub mode: ExtractMode,
    /// Forward modules to use; `None` selects the last one.
    pub forward_layers: Option<Vec<usize>>,
    /// Continue from the previous checkpoint's audit model.
    pub warm_start: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            lambda: 0.35,
            margin: 0.5,
            mu0: 0.4,
            decay_k: 5e-3,
            nu: 1.0,
            embed_dim: 64,
            conv_channels: 8,
            conv_kernel: 5,
            conv_stride: 1,
            pool_len: 64,
            generator_hidden: 128,
            classifier_hidden: 64,
            lr: 5e-4,
            epochs: 8,
            batch_size: 32,
            mode: ExtractMode::Both,
            forward_layers: None,
            warm_start: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.margin > 0.0 && self.margin <= 2.0) {
            return fail(format!("margin {} outside (0, 2]", self.margin));
        }
        for (name, v) in [("mu0", self.mu0), ("decay_k", self.decay_k), ("nu", self.nu), ("lr", self.lr)] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} {v} must be finite and non-negative"));
            }
        }
        if self.embed_dim < 2 {
            return fail(format!("embed_dim {} < 2", self.embed_dim));
        }
        let sizes = [
            self.conv_channels,
            self.conv_kernel,
            self.conv_stride,
            self.pool_len,
            self.generator_hidden,
            self.classifier_hidden,
        ];
        if sizes.contains(&0) {
            return fail("network sizes must be positive".into());
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return fail(format!("batch_size {} must be even and at least 2", self.batch_size));
        }
        Ok(())
    }

    /// λ actually applied: single-branch modes pin it to 1 or 0.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            ExtractMode::Forward => 1.0,
            ExtractMode::Backward => 0.0,
            ExtractMode::Both => self.lambda,
        }
    }
}

/// Widths of one generator branch's inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct BranchLayout {
    sequence: usize,
    scalars: usize,
    /// Pooled length actually used (bounded by the convolution output).
    pooled: usize,
}

const BRANCH_PARAMS: usize = 6;

/// Membership decision for a classifier score; ties at the threshold go
/// to "member".
pub fn decide(score: f64) -> u8 {
    u8::from(score >= DECISION_THRESHOLD)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub decision: u8,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub contrastive: f64,
    pub difference: f64,
    pub concentration: f64,
    pub cross_entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTrainLog {
    pub epochs: Vec<EpochLoss>,
    /// Optimizer steps taken; `t` for the concentration schedule.
    pub steps: u64,
}

/// Loss terms of one batch graph.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub contrastive: Var,
    pub difference: Var,
    pub concentration: Var,
    pub cross_entropy: Var,
}

/// Trained embedding generators and membership classifier, together with
/// the alignment they depend on and the target checkpoint they audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditModel {
    config: AuditConfig,
    alignment: AlignmentConfig,
    target_checksum: String,
    forward: Option<BranchLayout>,
    backward: Option<BranchLayout>,
    /// Forward branch, backward branch (each present per mode), then the
    /// classifier `[W1, b1, W2, b2]`.
    params: Vec<Tensor>,
}

fn branch_layout(cfg: &AuditConfig, widths: (usize, usize)) -> Result<BranchLayout> {
    let (sequence, scalars) = widths;
    if sequence < cfg.conv_kernel {
        return Err(Error::Config(format!(
            "feature sequence of width {sequence} is shorter than conv kernel {}",
            cfg.conv_kernel
        )));
    }
    let conv_out = (sequence - cfg.conv_kernel) / cfg.conv_stride + 1;
    Ok(BranchLayout {
        sequence,
        scalars,
        pooled: cfg.pool_len.min(conv_out),
    })
}

fn init_branch(rng: &mut rng::StreamRng, cfg: &AuditConfig, l: BranchLayout) -> Vec<Tensor> {
    let mut p = vec![
        rng::normal(rng, &[cfg.conv_channels, 1, cfg.conv_kernel], WEIGHT_STD),
        Tensor::zeros(&[cfg.conv_channels]),
    ];
    p.extend(dense(rng, cfg.conv_channels * l.pooled + l.scalars, cfg.generator_hidden));
    p.extend(dense(rng, cfg.generator_hidden, cfg.embed_dim));
    p
}

impl AuditModel {
    /// Fresh parameters drawn from the `audit-init` stream.
    pub fn init(config: AuditConfig, alignment: AlignmentConfig, target_checksum: String, seed: u64) -> Result<Self> {
        config.validate()?;
        if alignment.mode != config.mode {
            return Err(Error::Layout(format!(
                "alignment mode {:?} differs from audit mode {:?}",
                alignment.mode, config.mode
            )));
        }
        let forward = alignment.forward.as_ref().map(|s| branch_layout(&config, s.widths())).transpose()?;
        let backward = alignment.backward.as_ref().map(|s| branch_layout(&config, s.widths())).transpose()?;
        let mut rng = rng::stream(seed, "audit-init");
        let mut params = Vec::new();
        for l in [forward, backward].into_iter().flatten() {
            params.extend(init_branch(&mut rng, &config, l));
        }
        params.extend(dense(&mut rng, 2 * config.embed_dim, config.classifier_hidden));
        params.extend(dense(&mut rng, config.classifier_hidden, 1));
        Ok(Self {
            config,
            alignment,
            target_checksum,
            forward,
            backward,
            params,
        })
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    pub fn alignment(&self) -> &AlignmentConfig {
        &self.alignment
    }

    pub fn target_checksum(&self) -> &str {
        &self.target_checksum
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Replaces every parameter; shapes must match the current layout.
    pub fn with_params(mut self, params: Vec<Tensor>) -> Result<Self> {
        let same = params.len() == self.params.len() && params.iter().zip(&self.params).all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(Error::Layout("replacement parameters do not match the audit-model layout".into()));
        }
        self.params = params;
        Ok(self)
    }

    /// Range of the classifier parameters within [`AuditModel::params`].
    pub fn classifier_params(&self) -> std::ops::Range<usize> {
        self.params.len() - 4..self.params.len()
    }

    /// Range of the forward-branch parameters, if that branch exists.
    pub fn forward_params(&self) -> Option<std::ops::Range<usize>> {
        self.forward.map(|_| 0..BRANCH_PARAMS)
    }

    /// Range of the backward-branch parameters, if that branch exists.
    pub fn backward_params(&self) -> Option<std::ops::Range<usize>> {
        let start = if self.forward.is_some() { BRANCH_PARAMS } else { 0 };
        self.backward.map(|_| start..start + BRANCH_PARAMS)
    }

    /// Checks a record's blocks against the fitted layout.
    fn block<'a>(&self, block: Option<&'a FeatureBlock>, layout: BranchLayout, which: &str) -> Result<&'a FeatureBlock> {
        let b = block.ok_or_else(|| Error::Layout(format!("aligned record lacks the {which} block")))?;
        if b.sequence.len() != layout.sequence || b.scalars.len() != layout.scalars {
            return Err(Error::Layout(format!(
                "{which} block is ({}, {}) wide, expected ({}, {})",
                b.sequence.len(),
                b.scalars.len(),
                layout.sequence,
                layout.scalars
            )));
        }
        Ok(b)
    }

    fn branch(&self, tape: &mut Tape, p: &[Var], blocks: &[&FeatureBlock], l: BranchLayout) -> Result<Var> {
        let n = blocks.len();
        let seq = stack(blocks.iter().map(|b| b.sequence.as_slice()), l.sequence)?.reshaped(vec![n, 1, l.sequence])?;
        let seq = tape.constant(seq);
        let scalars = tape.constant(stack(blocks.iter().map(|b| b.scalars.as_slice()), l.scalars)?);
        let c = tape.conv1d(seq, p[0], p[1], self.config.conv_stride)?;
        let c = tape.relu(c)?;
        let c = tape.adaptive_avg_pool1d(c, l.pooled)?;
        let c = tape.reshape(c, &[n, self.config.conv_channels * l.pooled])?;
        let x = tape.concat(&[c, scalars], 1)?;
        let h = linear(tape, x, p[2], p[3])?;
        let h = tape.relu(h)?;
        linear(tape, h, p[4], p[5])
    }

    /// Joint embeddings `(n, 2E)`: the λ-scaled forward half followed by the
    /// (1-λ)-scaled backward half. A missing branch contributes zeros.
    pub fn embed_graph(&self, tape: &mut Tape, params: &[Var], batch: &[&AlignedRecord]) -> Result<Var> {
        let n = batch.len();
        let e = self.config.embed_dim;
        let lambda = self.config.effective_lambda();
        let mut halves = Vec::with_capacity(2);
        let mut offset = 0;
        for (layout, weight, which) in [(self.forward, lambda, "forward"), (self.backward, 1.0 - lambda, "backward")] {
            let half = match layout {
                Some(l) => {
                    let blocks = batch
                        .iter()
                        .map(|r| self.block(if which == "forward" { r.forward.as_ref() } else { r.backward.as_ref() }, l, which))
                        .collect::<Result<Vec<_>>>()?;
                    let out = self.branch(tape, &params[offset..offset + BRANCH_PARAMS], &blocks, l)?;
                    offset += BRANCH_PARAMS;
                    tape.scale(out, weight)?
                }
                None => tape.constant(Tensor::zeros(&[n, e])),
            };
            halves.push(half);
        }
        Ok(tape.concat(&halves, 1)?)
    }

    /// Membership probabilities `(n, 1)` for embeddings `(n, 2E)`.
    pub fn classify_graph(&self, tape: &mut Tape, params: &[Var], embeddings: Var) -> Result<Var> {
        classifier_head(tape, embeddings, &params[self.classifier_params()])
    }

    /// All loss terms for one nested-pair batch at optimizer step `step`.
    pub fn loss_graph(
        &self,
        tape: &mut Tape,
        params: &[Var],
        members: &[&AlignedRecord],
        non_members: &[&AlignedRecord],
        step: u64,
    ) -> Result<LossTerms> {
        if members.len() != non_members.len() || members.is_empty() {
            return Err(Error::Unbalanced {
                members: members.len(),
                non_members: non_members.len(),
            });
        }
        let g = members.len();
        let batch: Vec<&AlignedRecord> = members.iter().chain(non_members).copied().collect();
        let emb = self.embed_graph(tape, params, &batch)?;
        let m_idx: Vec<usize> = (0..g).collect();
        let n_idx: Vec<usize> = (g..2 * g).collect();
        let m = tape.index_rows(emb, &m_idx)?;
        let n = tape.index_rows(emb, &n_idx)?;
        let cfg = &self.config;
        let difference = loss::loss_d(tape, m, n, cfg.margin)?;
        let concentration = loss::loss_s(tape, m)?;
        let weighted_s = tape.scale(concentration, mu(step, cfg.mu0, cfg.decay_k))?;
        let contrastive = tape.add(difference, weighted_s)?;
        let probs = self.classify_graph(tape, params, emb)?;
        let labels: Vec<f64> = (0..2 * g).map(|i| if i < g { 1.0 } else { 0.0 }).collect();
        let cross_entropy = tape.binary_cross_entropy(probs, &labels, BCE_CLIP)?;
        let weighted_ce = tape.scale(cross_entropy, cfg.nu)?;
        let total = tape.add(contrastive, weighted_ce)?;
        Ok(LossTerms {
            total,
            contrastive,
            difference,
            concentration,
            cross_entropy,
        })
    }

    fn constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    /// Embeddings `r(x)` of aligned records.
    pub fn embed(&self, records: &[AlignedRecord]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let p = self.constants(&mut tape);
        let batch: Vec<&AlignedRecord> = records.iter().collect();
        let e = self.embed_graph(&mut tape, &p, &batch)?;
        let t = tape.value(e);
        Ok(t.data().chunks(t.shape()[1]).map(<[f64]>::to_vec).collect())
    }

    /// Membership scores of aligned records, evaluated in chunks.
    pub fn scores(&self, records: &[AlignedRecord]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(64) {
            let mut tape = Tape::new();
            let p = self.constants(&mut tape);
            let batch: Vec<&AlignedRecord> = chunk.iter().collect();
            let e = self.embed_graph(&mut tape, &p, &batch)?;
            let probs = self.classify_graph(&mut tape, &p, e)?;
            out.extend_from_slice(tape.value(probs).data());
        }
        Ok(out)
    }

    pub fn infer_record(&self, record: &PropertyRecord) -> Result<Inference> {
        let aligned = align(record, &self.alignment)?;
        let score = self.scores(&[aligned])?[0];
        Ok(Inference {
            decision: decide(score),
            score,
        })
    }

    /// Attack decision for `sample` against the checkpoint this model was
    /// trained for.
    pub fn infer(&self, sample: &Sample, target: &TargetModel) -> Result<Inference> {
        let sum = checkpoint::checksum(target);
        if sum != self.target_checksum {
            return Err(Error::Checkpoint(format!(
                "audit model was trained against checkpoint {} but got {sum}",
                self.target_checksum
            )));
        }
        self.infer_record(&extract(target, sample, self.config.mode)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("audit model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Trains generators and classifier jointly on nested pairs drawn from the
/// aligned audit-train members and non-members.
///
/// With `warm_start`, parameters start from that model (which must share
/// the layout) instead of a fresh draw; the optimizer state is fresh.
pub fn train_audit_model(
    members: &[AlignedRecord],
    non_members: &[AlignedRecord],
    alignment: AlignmentConfig,
    config: &AuditConfig,
    target_checksum: String,
    seed: u64,
    warm_start: Option<&AuditModel>,
) -> Result<(AuditModel, AuditTrainLog)> {
    if members.is_empty() || non_members.is_empty() {
        return Err(Error::Empty("audit-train split"));
    }
    let mut model = AuditModel::init(config.clone(), alignment, target_checksum, seed)?;
    if let Some(prev) = warm_start {
        model = model.with_params(prev.params.clone())?;
    }
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &model.params);
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = pair_indices(members.len(), non_members.len(), config.batch_size, seed, epoch as u64)?;
        let mut sums = [0.0; 5];
        for batch in &batches {
            let m: Vec<&AlignedRecord> = batch.groups.iter().map(|g| &members[g.member]).collect();
            let n: Vec<&AlignedRecord> = batch.groups.iter().map(|g| &non_members[g.non_member]).collect();
            let mut tape = Tape::new();
            let params: Vec<Var> = model.params.iter().map(|p| tape.leaf(p.clone())).collect();
            let terms = model.loss_graph(&mut tape, &params, &m, &n, adam.steps())?;
            let value = |v: Var| tape.value(v).item().expect("scalar loss");
            let vals = [
                value(terms.total),
                value(terms.contrastive),
                value(terms.difference),
                value(terms.concentration),
                value(terms.cross_entropy),
            ];
            sums.iter_mut().zip(vals).for_each(|(s, v)| *s += v);
            let grads = tape.backward(terms.total)?;
            let refs: Vec<Option<&[f64]>> = params.iter().map(|&p| grads.get(p)).collect();
            adam.step(&mut model.params, &refs)?;
        }
        let k = batches.len() as f64;
        epochs.push(EpochLoss {
            total: sums[0] / k,
            contrastive: sums[1] / k,
            difference: sums[2] / k,
            concentration: sums[3] / k,
            cross_entropy: sums[4] / k,
        });
    }
    Ok((
        model,
        AuditTrainLog {
            epochs,
            steps: adam.steps(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use tensor::gradcheck::{grad_check, GradCheckOptions};
    use tensor::TensorError;

    use super::*;
    use crate::metrics::balanced_accuracy;
    use crate::property::{BlockStats, Standardizer};

    const SEQ: usize = 24;
    const SCALARS: usize = 3;

    fn identity(width: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    fn alignment(mode: ExtractMode) -> AlignmentConfig {
        let stats = || {
            Some(BlockStats {
                sequence: identity(SEQ),
                scalars: identity(SCALARS),
            })
        };
        AlignmentConfig {
            mode,
            forward_layers: vec![1],
            forward: if mode.forward() { stats() } else { None },
            backward: if mode.backward() { stats() } else { None },
        }
    }

    fn small_config() -> AuditConfig {
        AuditConfig {
            embed_dim: 4,
            conv_channels: 2,
            conv_kernel: 3,
            pool_len: 6,
            generator_hidden: 8,
            classifier_hidden: 6,
            batch_size: 4,
            ..AuditConfig::default()
        }
    }

    fn block(rng: &mut rng::StreamRng, shift: f64) -> FeatureBlock {
        let mut draw = |n| rng::normal(rng, &[n], 1.0).data().iter().map(|v| v + shift).collect();
        FeatureBlock {
            sequence: draw(SEQ),
            scalars: draw(SCALARS),
        }
    }

    fn records(seed: u64, n: usize, shift: f64) -> Vec<AlignedRecord> {
        let mut rng = rng::stream(seed, "test-records");
        (0..n)
            .map(|_| AlignedRecord {
                forward: Some(block(&mut rng, shift)),
                backward: Some(block(&mut rng, -shift)),
            })
            .collect()
    }

    fn model(config: AuditConfig) -> AuditModel {
        AuditModel::init(config, alignment(ExtractMode::Both), "none".into(), 3).unwrap()
    }

    fn tensor_err(e: Error) -> TensorError {
        match e {
            Error::Tensor(t) => t,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unit_lambda_zeroes_the_backward_half() {
        let m = model(AuditConfig {
            lambda: 1.0,
            ..small_config()
        });
        for row in m.embed(&records(0, 3, 0.0)).unwrap() {
            assert!(row[4..].iter().all(|&v| v == 0.0));
            assert!(row[..4].iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn half_lambda_scales_unit_branch_outputs() {
        let mut m = model(AuditConfig {
            lambda: 0.5,
            ..small_config()
        });
        for branch in [m.forward_params().unwrap(), m.backward_params().unwrap()] {
            m.params[branch.start + 4].data_mut().fill(0.0);
            m.params[branch.start + 5].data_mut().fill(1.0);
        }
        for row in m.embed(&records(1, 2, 0.0)).unwrap() {
            assert_eq!(row, vec![0.5; 8]);
        }
    }

    #[test]
    fn forward_generator_gradient_matches_finite_differences() {
        let m = model(small_config());
        let recs = records(2, 3, 0.0);
        let batch: Vec<&AlignedRecord> = recs.iter().collect();
        let range = m.forward_params().unwrap();
        let f = |tape: &mut Tape, vars: &[Var]| {
            let mut all: Vec<Var> = m.params.iter().map(|p| tape.constant(p.clone())).collect();
            all[range.clone()].copy_from_slice(vars);
            let e = m.embed_graph(tape, &all, &batch).map_err(tensor_err)?;
            let sq = tape.mul(e, e)?;
            tape.sum(sq)
        };
        let report = grad_check(f, &m.params[range.clone()], GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn total_loss_matches_finite_differences_on_four_samples() {
        // Init biases are zero, which parks ReLU inputs on the kink; check at
        // a generic point instead.
        let mut m = model(small_config());
        let mut rng = rng::stream(9, "test-point");
        for p in &mut m.params {
            *p = rng::normal(&mut rng, p.shape(), 0.5);
        }
        let members = records(4, 2, 0.3);
        let non_members = records(5, 2, -0.3);
        let mr: Vec<&AlignedRecord> = members.iter().collect();
        let nr: Vec<&AlignedRecord> = non_members.iter().collect();
        let f = |tape: &mut Tape, vars: &[Var]| Ok(m.loss_graph(tape, vars, &mr, &nr, 7).map_err(tensor_err)?.total);
        let report = grad_check(f, &m.params, GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }

    #[test]
    fn zero_nu_leaves_classifier_without_gradient() {
        let m = model(AuditConfig {
            nu: 0.0,
            ..small_config()
        });
        let members = records(6, 2, 0.5);
        let non_members = records(7, 2, -0.5);
        let mut tape = Tape::new();
        let vars: Vec<Var> = m.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mr: Vec<&AlignedRecord> = members.iter().collect();
        let nr: Vec<&AlignedRecord> = non_members.iter().collect();
        let terms = m.loss_graph(&mut tape, &vars, &mr, &nr, 0).unwrap();
        let grads = tape.backward(terms.total).unwrap();
        for &v in &vars[m.classifier_params()] {
            assert!(grads.get(v).unwrap().iter().all(|&g| g == 0.0));
        }
        let generator_moves = vars[m.forward_params().unwrap()]
            .iter()
            .any(|&v| grads.get(v).unwrap().iter().any(|&g| g != 0.0));
        assert!(generator_moves);
    }

    fn train(seed: u64) -> (AuditModel, Vec<AlignedRecord>, Vec<AlignedRecord>) {
        let members = records(10, 32, 0.8);
        let non_members = records(11, 32, -0.8);
        let cfg = AuditConfig {
            epochs: 25,
            lr: 5e-3,
            batch_size: 16,
            ..small_config()
        };
        let (m, log) =
            train_audit_model(&members, &non_members, alignment(ExtractMode::Both), &cfg, "none".into(), seed, None)
                .unwrap();
        assert_eq!(log.epochs.len(), 25);
        assert_eq!(log.steps, 25 * 4);
        (m, members, non_members)
    }

    #[test]
    fn separable_embeddings_are_learned() {
        let (m, members, non_members) = train(0);
        let all: Vec<AlignedRecord> = members.iter().chain(&non_members).cloned().collect();
        let decisions: Vec<u8> = m.scores(&all).unwrap().into_iter().map(decide).collect();
        let labels: Vec<u8> = (0..64).map(|i| u8::from(i < 32)).collect();
        assert!(balanced_accuracy(&decisions, &labels).unwrap() >= 0.99);
    }

    #[test]
    fn training_is_deterministic_and_serializable() {
        let (a, members, _) = train(1);
        let (b, _, _) = train(1);
        assert_eq!(a.scores(&members).unwrap(), b.scores(&members).unwrap());
        let restored = AuditModel::from_json(&a.to_json()).unwrap();
        assert_eq!(restored, a);
    }

    #[test]
    fn threshold_tie_is_a_member() {
        assert_eq!(decide(DECISION_THRESHOLD), 1);
        assert_eq!(decide(0.4999999), 0);
    }

    #[test]
    fn mismatched_block_is_a_layout_error() {
        let m = model(small_config());
        let mut recs = records(8, 1, 0.0);
        recs[0].backward.as_mut().unwrap().sequence.pop();
        assert!(matches!(m.embed(&recs), Err(Error::Layout(_))));
    }
}
