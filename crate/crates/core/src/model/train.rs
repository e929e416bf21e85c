use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tensor::rng;
use tensor::{Adam, AdamConfig, Tape};

use super::config::TaskHead;
use super::transformer::{BuildOptions, TargetModel};
use crate::data::TaskExample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Evaluate train/test accuracy every this many epochs (0 = never).
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
}

fn default_eval_interval() -> usize {
    1
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            eval_interval: 1,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        Ok(())
    }
}

/// Next-token pretraining on unlabeled sequences before fine-tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    /// Sequences drawn for the pretraining corpus.
    pub corpus_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean loss over the epoch's optimizer batches.
    pub running_loss: f64,
    pub train: Option<Evaluation>,
    pub test: Option<Evaluation>,
}

/// Mean loss and accuracy. Classification accuracy uses the argmax class;
/// next-token accuracy is averaged over predicted positions.
pub fn evaluate(model: &TargetModel, examples: &[TaskExample]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let (mut loss, mut correct, mut total) = (0.0, 0.0, 0.0);
    for ex in examples {
        let f = model.forward_instrumented(&ex.tokens, ex.label)?;
        loss += f.loss;
        match model.config().task {
            TaskHead::Classification { .. } => {
                correct += f64::from(u8::from(argmax(f.logits.data()) == ex.label));
                total += 1.0;
            }
            TaskHead::NextToken => {
                let content = ex.content();
                let width = f.logits.shape()[1];
                for (i, &next) in content.iter().enumerate().skip(1) {
                    let row = &f.logits.data()[(i - 1) * width..i * width];
                    correct += f64::from(u8::from(argmax(row) == next as usize));
                    total += 1.0;
                }
            }
        }
    }
    Ok(Evaluation {
        loss: loss / examples.len() as f64,
        accuracy: correct / total,
    })
}

/// Index of the first maximal entry.
fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

struct Stepper<'m> {
    model: &'m mut TargetModel,
    adam: Adam,
    dropout: rng::StreamRng,
    shuffle: rng::StreamRng,
    grads: Vec<Vec<f64>>,
    tied_lm: bool,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m mut TargetModel, lr: f64, seed: u64, stage: &str, tied_lm: bool) -> Self {
        let adam = Adam::new(AdamConfig::with_lr(lr), model.params());
        let grads = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        Self {
            model,
            adam,
            dropout: rng::stream(seed, &format!("{stage}-dropout")),
            shuffle: rng::stream(seed, &format!("{stage}-shuffle")),
            grads,
            tied_lm,
        }
    }

    /// One pass over `examples` in a freshly shuffled order; returns the
    /// mean batch loss.
    fn epoch(&mut self, examples: &[TaskExample], batch_size: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.shuffle);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(batch_size) {
            for g in &mut self.grads {
                g.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let content = self.model.prepare(&ex.tokens)?;
                let mut tape = Tape::new();
                let g = self.model.build(
                    &mut tape,
                    content,
                    ex.label,
                    BuildOptions {
                        trainable: true,
                        dropout: Some(&mut self.dropout),
                        loss_scale: scale,
                        tied_lm: self.tied_lm,
                    },
                )?;
                batch_loss += tape.value(g.loss).item().expect("scalar loss");
                let grads = tape.backward(g.loss)?;
                for (acc, &p) in self.grads.iter_mut().zip(&g.params) {
                    let gp = grads.get(p).expect("leaf gradient");
                    acc.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
                }
            }
            let refs: Vec<Option<&[f64]>> = self.grads.iter().map(|g| Some(g.as_slice())).collect();
            self.adam.step(self.model.params_mut(), &refs)?;
            total += batch_loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }
}

/// Fine-tunes `model` on the task examples, calling `on_epoch` with the
/// model state after every epoch. `test` is used only for evaluation.
pub fn fine_tune<F>(
    model: &mut TargetModel,
    train: &[TaskExample],
    test: &[TaskExample],
    cfg: &FineTuneConfig,
    seed: u64,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &TargetModel) -> Result<()>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("fine-tuning set"));
    }
    let mut stepper = Stepper::new(model, cfg.lr, seed, "finetune", false);
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let running_loss = stepper.epoch(train, cfg.batch_size)?;
        let evaluate_now = cfg.eval_interval > 0 && epoch % cfg.eval_interval == 0;
        let (train_eval, test_eval) = if evaluate_now {
            let t = evaluate(stepper.model, train)?;
            let v = if test.is_empty() { None } else { Some(evaluate(stepper.model, test)?) };
            (Some(t), v)
        } else {
            (None, None)
        };
        let stats = EpochStats {
            epoch,
            running_loss,
            train: train_eval,
            test: test_eval,
        };
        on_epoch(&stats, stepper.model)?;
        out.push(stats);
    }
    Ok(out)
}

/// Next-token pretraining through the tied token embedding; the task head
/// is left untouched.
pub fn pretrain(model: &mut TargetModel, corpus: &[TaskExample], cfg: &PretrainConfig, seed: u64) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Empty("pretraining corpus"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("pretrain batch_size must be positive".into()));
    }
    let mut stepper = Stepper::new(model, cfg.lr, seed, "pretrain", true);
    (0..cfg.epochs).map(|_| stepper.epoch(corpus, cfg.batch_size)).collect()
}
