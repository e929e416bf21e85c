use serde::{Deserialize, Serialize};
use tensor::rng::{self, StreamRng};
use tensor::{Tape, Tensor, Var};

use super::config::{Granularity, ModelConfig, TaskHead};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

/// Parameters per transformer block, in storage order.
const BLOCK_PARAMS: [&str; 12] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.qkv.weight",
    "attn.qkv.bias",
    "attn.proj.weight",
    "attn.proj.bias",
    "ln2.gamma",
    "ln2.beta",
    "mlp.fc.weight",
    "mlp.fc.bias",
    "mlp.proj.weight",
    "mlp.proj.bias",
];

/// Offsets of the attention parameters within a block.
const ATTN_RANGE: std::ops::Range<usize> = 2..6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Index into the gradient-norm groups.
    pub group: usize,
}

/// Storage order of the parameters and their grouping for gradient norms.
///
/// Groups are ordered: `embeddings`, `block0` .. `block{L-1}`, `head`
/// (final layer norm plus task head).
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let spec = |name: String, shape: Vec<usize>, group| ParamSpec { name, shape, group };
    let mut out = vec![
        spec("tok_emb".into(), vec![cfg.vocab_size, d], 0),
        spec("pos_emb".into(), vec![cfg.max_seq_len, d], 0),
    ];
    for l in 0..cfg.n_layers {
        let shapes = [
            vec![d],
            vec![d],
            vec![d, 3 * d],
            vec![3 * d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, 4 * d],
            vec![4 * d],
            vec![4 * d, d],
            vec![d],
        ];
        for (name, shape) in BLOCK_PARAMS.iter().zip(shapes) {
            out.push(spec(format!("block{l}.{name}"), shape, l + 1));
        }
    }
    let head = cfg.n_layers + 1;
    out.push(spec("ln_f.gamma".into(), vec![d], head));
    out.push(spec("ln_f.beta".into(), vec![d], head));
    out.push(spec("head.weight".into(), vec![d, cfg.head_width()], head));
    out.push(spec("head.bias".into(), vec![cfg.head_width()], head));
    out
}

pub fn group_names(cfg: &ModelConfig) -> Vec<String> {
    let mut names = vec!["embeddings".to_string()];
    names.extend((0..cfg.n_layers).map(|l| format!("block{l}")));
    names.push("head".into());
    names
}

/// Instrumented decoder-only transformer with a task head.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetModel {
    config: ModelConfig,
    params: Vec<Tensor>,
}

/// Output of an instrumented forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentedForward {
    /// One `(seq_len, d_model)` output per intermediate module.
    pub module_outputs: Vec<Tensor>,
    /// `(n_classes)` for classification, `(seq_len, vocab)` for next-token.
    pub logits: Tensor,
    pub loss: f64,
}

pub(crate) struct Graph {
    pub params: Vec<Var>,
    pub module_outputs: Vec<Var>,
    pub logits: Var,
    pub loss: Var,
}

/// How a forward graph is built.
pub(crate) struct BuildOptions<'a> {
    /// Insert parameters as trainable leaves (otherwise constants).
    pub trainable: bool,
    /// Dropout stream; `None` disables dropout.
    pub dropout: Option<&'a mut StreamRng>,
    pub loss_scale: f64,
    /// Replace the task head with next-token prediction through the
    /// transposed token embedding (used for pretraining).
    pub tied_lm: bool,
}

impl TargetModel {
    /// Random initialization: `N(0, 0.02)` weights and embeddings, zero
    /// biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "target-init");
        let params = param_specs(&config)
            .into_iter()
            .map(|p| {
                if p.name.ends_with("gamma") {
                    Tensor::full(&p.shape, 1.0)
                } else if p.name.ends_with("bias") || p.name.ends_with("beta") {
                    Tensor::zeros(&p.shape)
                } else {
                    rng::normal(&mut rng, &p.shape, INIT_STD)
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.shape != p.shape() {
                return Err(Error::Checkpoint(format!(
                    "{}: expected shape {:?}, got {:?}",
                    s.name,
                    s.shape,
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Indices of the last block's attention parameters.
    pub fn last_attention_params(&self) -> std::ops::Range<usize> {
        let base = 2 + (self.config.n_layers - 1) * BLOCK_PARAMS.len();
        base + ATTN_RANGE.start..base + ATTN_RANGE.end
    }

    /// Validates `tokens` and strips trailing padding.
    pub(crate) fn prepare<'t>(&self, tokens: &'t [u32]) -> Result<&'t [u32]> {
        let end = tokens
            .iter()
            .rposition(|&t| t != crate::data::PAD_TOKEN)
            .map_or(0, |i| i + 1);
        let content = &tokens[..end];
        if content.is_empty() {
            return Err(Error::EmptySequence);
        }
        if content.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: content.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some((position, &token)) = content
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= self.config.vocab_size)
        {
            return Err(Error::TokenOutOfRange {
                token,
                position,
                vocab_size: self.config.vocab_size,
            });
        }
        if matches!(self.config.task, TaskHead::NextToken) && content.len() < 2 {
            return Err(Error::Config("next-token loss needs at least two tokens".into()));
        }
        Ok(content)
    }

    fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut Option<&mut StreamRng>) -> Result<Var> {
        use rand::Rng;
        let Some(rng) = rng.as_deref_mut() else { return Ok(x) };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let shape = tape.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let m = tape.constant(Tensor::new(shape, mask)?);
        Ok(tape.mul(x, m)?)
    }

    fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = tape.matmul(x, w)?;
        Ok(tape.add(y, b)?)
    }

    /// Records the forward computation for an already-validated sequence.
    pub(crate) fn build(&self, tape: &mut Tape, tokens: &[u32], label: usize, mut opts: BuildOptions<'_>) -> Result<Graph> {
        let cfg = &self.config;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| if opts.trainable { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        let t_len = tokens.len();
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..t_len).collect();

        let tok = tape.embedding(params[0], &ids)?;
        let pos = tape.embedding(params[1], &positions)?;
        let mut x = tape.add(tok, pos)?;
        x = Self::dropout(tape, x, cfg.dropout_rate, &mut opts.dropout)?;

        let (d, dh) = (cfg.d_model, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut module_outputs = Vec::with_capacity(cfg.n_modules());
        for l in 0..cfg.n_layers {
            let p = &params[2 + l * BLOCK_PARAMS.len()..2 + (l + 1) * BLOCK_PARAMS.len()];
            let h = tape.layer_norm(x, p[0], p[1], LAYER_NORM_EPS)?;
            let qkv = Self::linear(tape, h, p[2], p[3])?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let q = tape.slice_last(qkv, head * dh, (head + 1) * dh)?;
                let k = tape.slice_last(qkv, d + head * dh, d + (head + 1) * dh)?;
                let v = tape.slice_last(qkv, 2 * d + head * dh, 2 * d + (head + 1) * dh)?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let scores = tape.scale(scores, scale)?;
                let att = tape.causal_softmax(scores)?;
                heads.push(tape.matmul(att, v)?);
            }
            let merged = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, 1)? };
            let attn = Self::linear(tape, merged, p[4], p[5])?;
            let attn = Self::dropout(tape, attn, cfg.dropout_rate, &mut opts.dropout)?;
            x = tape.add(x, attn)?;
            if cfg.granularity == Granularity::Sublayer {
                module_outputs.push(x);
            }

            let h = tape.layer_norm(x, p[6], p[7], LAYER_NORM_EPS)?;
            let h = Self::linear(tape, h, p[8], p[9])?;
            let h = tape.gelu(h)?;
            let h = Self::linear(tape, h, p[10], p[11])?;
            let h = Self::dropout(tape, h, cfg.dropout_rate, &mut opts.dropout)?;
            x = tape.add(x, h)?;
            module_outputs.push(x);
        }

        let n = params.len();
        let xf = tape.layer_norm(x, params[n - 4], params[n - 3], LAYER_NORM_EPS)?;
        let (logits, loss) = match cfg.task {
            _ if opts.tied_lm => {
                if t_len < 2 {
                    return Err(Error::Config("next-token loss needs at least two tokens".into()));
                }
                let table_t = tape.transpose(params[0])?;
                let logits = tape.matmul(xf, table_t)?;
                let inputs: Vec<usize> = (0..t_len - 1).collect();
                let preds = tape.index_rows(logits, &inputs)?;
                let loss = tape.cross_entropy(preds, &ids[1..])?;
                (logits, loss)
            }
            TaskHead::Classification { n_classes } => {
                if label >= n_classes {
                    return Err(Error::InvalidLabel(format!("label {label} with {n_classes} classes")));
                }
                let last = tape.index_rows(xf, &[t_len - 1])?;
                let logits = Self::linear(tape, last, params[n - 2], params[n - 1])?;
                let loss = tape.cross_entropy(logits, &[label])?;
                (logits, loss)
            }
            TaskHead::NextToken => {
                let logits = Self::linear(tape, xf, params[n - 2], params[n - 1])?;
                let inputs: Vec<usize> = (0..t_len - 1).collect();
                let preds = tape.index_rows(logits, &inputs)?;
                let loss = tape.cross_entropy(preds, &ids[1..])?;
                (logits, loss)
            }
        };
        let loss = if opts.loss_scale == 1.0 { loss } else { tape.scale(loss, opts.loss_scale)? };
        Ok(Graph {
            params,
            module_outputs,
            logits,
            loss,
        })
    }

    /// Runs the model with dropout disabled and returns every module output.
    pub fn forward_instrumented(&self, tokens: &[u32], label: usize) -> Result<InstrumentedForward> {
        let content = self.prepare(tokens)?;
        let mut tape = Tape::new();
        let g = self.build(
            &mut tape,
            content,
            label,
            BuildOptions {
                trainable: false,
                dropout: None,
                loss_scale: 1.0,
                tied_lm: false,
            },
        )?;
        let logits = tape.value(g.logits).clone();
        let logits = match self.config.task {
            TaskHead::Classification { .. } => Tensor::from_vec(logits.into_data()),
            TaskHead::NextToken => logits,
        };
        Ok(InstrumentedForward {
            module_outputs: g.module_outputs.iter().map(|&v| tape.value(v).clone()).collect(),
            logits,
            loss: tape.value(g.loss).item().expect("scalar loss"),
        })
    }

    /// Task logits without instrumentation.
    pub fn logits(&self, tokens: &[u32], label: usize) -> Result<Tensor> {
        Ok(self.forward_instrumented(tokens, label)?.logits)
    }

    /// Per-parameter gradients of `loss_scale * loss` for one sample.
    pub(crate) fn gradients(&self, tokens: &[u32], label: usize, loss_scale: f64) -> Result<(f64, Vec<Vec<f64>>)> {
        let content = self.prepare(tokens)?;
        let mut tape = Tape::new();
        let g = self.build(
            &mut tape,
            content,
            label,
            BuildOptions {
                trainable: true,
                dropout: None,
                loss_scale,
                tied_lm: false,
            },
        )?;
        let loss = tape.value(g.loss).item().expect("scalar loss");
        if !loss.is_finite() {
            return Err(Error::NonFinite { what: "target loss".into() });
        }
        let mut grads = tape.backward(g.loss)?;
        let per_param = g
            .params
            .iter()
            .map(|&v| grads.take(v).expect("leaf gradient"))
            .collect();
        Ok((loss, per_param))
    }
}

/// White-box evidence from one backward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardProperties {
    /// Flattened gradients of the last block's attention parameters, in
    /// storage order.
    pub last_attention_grad: Vec<f64>,
    /// L2 norm of the gradient of each parameter group (see [`group_names`]).
    pub group_norms: Vec<f64>,
    pub loss: f64,
}

impl TargetModel {
    pub fn backward_properties(&self, tokens: &[u32], label: usize) -> Result<BackwardProperties> {
        self.backward_properties_scaled(tokens, label, 1.0)
    }

    /// Backward properties of `loss_scale * loss`.
    pub fn backward_properties_scaled(&self, tokens: &[u32], label: usize, loss_scale: f64) -> Result<BackwardProperties> {
        let (loss, grads) = self.gradients(tokens, label, loss_scale)?;
        let specs = param_specs(&self.config);
        let mut sq = vec![0.0; self.config.n_layers + 2];
        for (spec, g) in specs.iter().zip(&grads) {
            sq[spec.group] += g.iter().map(|v| v * v).sum::<f64>();
        }
        let last_attention_grad = grads[self.last_attention_params()].concat();
        Ok(BackwardProperties {
            last_attention_grad,
            group_norms: sq.into_iter().map(f64::sqrt).collect(),
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(d_model: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            d_model,
            n_heads: 2,
            n_layers: 2,
            max_seq_len: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn param_count_depends_only_on_config() {
        let a = TargetModel::new(tiny(8), 1).unwrap();
        let b = TargetModel::new(tiny(8), 2).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let d = 8;
        let block = 4 * d + (3 * d * d + 3 * d) + (d * d + d) + (4 * d * d + 4 * d) + (4 * d * d + d);
        let expected = 16 * d + 8 * d + 2 * block + 2 * d + d * 2 + 2;
        assert_eq!(a.param_count(), expected);
    }

    #[test]
    fn one_output_per_block_or_sublayer() {
        let m = TargetModel::new(tiny(8), 0).unwrap();
        let f = m.forward_instrumented(&[1, 2, 3], 0).unwrap();
        assert_eq!(f.module_outputs.len(), 2);
        assert!(f.module_outputs.iter().all(|o| o.shape() == [3, 8]));
        assert_eq!(f.logits.shape(), [2]);

        let cfg = ModelConfig { granularity: Granularity::Sublayer, ..tiny(8) };
        let f = TargetModel::new(cfg, 0).unwrap().forward_instrumented(&[1, 2, 3], 0).unwrap();
        assert_eq!(f.module_outputs.len(), 4);
    }

    #[test]
    fn rejects_bad_tokens_with_position() {
        let m = TargetModel::new(tiny(8), 0).unwrap();
        match m.forward_instrumented(&[1, 99, 2], 0) {
            Err(Error::TokenOutOfRange { token: 99, position: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            m.forward_instrumented(&[1; 9], 0),
            Err(Error::SequenceTooLong { len: 9, max: 8 })
        ));
        assert!(matches!(m.forward_instrumented(&[0, 0], 0), Err(Error::EmptySequence)));
    }

    #[test]
    fn trailing_padding_is_ignored() {
        let m = TargetModel::new(tiny(8), 3).unwrap();
        let a = m.forward_instrumented(&[4, 5, 6], 1).unwrap();
        let b = m.forward_instrumented(&[4, 5, 6, 0, 0], 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn norms_cover_every_group_and_scale_linearly() {
        let m = TargetModel::new(tiny(8), 4).unwrap();
        let p = m.backward_properties(&[3, 1, 4, 1, 5], 1).unwrap();
        assert_eq!(p.group_norms.len(), group_names(m.config()).len());
        assert_eq!(p.last_attention_grad.len(), 8 * 24 + 24 + 8 * 8 + 8);
        let f = m.forward_instrumented(&[3, 1, 4, 1, 5], 1).unwrap();
        assert!((p.loss - f.loss).abs() < 1e-12);

        let q = m.backward_properties_scaled(&[3, 1, 4, 1, 5], 1, 2.0).unwrap();
        for (a, b) in p.group_norms.iter().zip(&q.group_norms) {
            assert!((2.0 * a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn next_token_head_produces_per_position_logits() {
        let cfg = ModelConfig { task: TaskHead::NextToken, ..tiny(8) };
        let m = TargetModel::new(cfg, 0).unwrap();
        let f = m.forward_instrumented(&[1, 2, 3, 4], 0).unwrap();
        assert_eq!(f.logits.shape(), [4, 16]);
        assert!(f.loss > 0.0);
    }
}
