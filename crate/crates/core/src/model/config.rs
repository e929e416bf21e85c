use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskHead {
    Classification { n_classes: usize },
    NextToken,
}

/// What counts as one intermediate module when recording forward outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One output per transformer block.
    #[default]
    Block,
    /// Separate outputs after the attention and MLP residual updates.
    Sublayer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub max_seq_len: usize,
    pub task: TaskHead,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub granularity: Granularity,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            max_seq_len: 64,
            task: TaskHead::Classification { n_classes: 2 },
            dropout_rate: 0.0,
            granularity: Granularity::Block,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 2 {
            return fail(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_layers < 1 {
            return fail("n_layers must be at least 1".into());
        }
        if self.max_seq_len < 2 {
            return fail(format!("max_seq_len {} < 2", self.max_seq_len));
        }
        if let TaskHead::Classification { n_classes } = self.task {
            if n_classes < 2 {
                return fail(format!("n_classes {n_classes} < 2"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        match self.task {
            TaskHead::Classification { n_classes } => n_classes,
            TaskHead::NextToken => self.vocab_size,
        }
    }

    /// Number of task classes, or zero for next-token prediction.
    pub fn n_classes(&self) -> usize {
        match self.task {
            TaskHead::Classification { n_classes } => n_classes,
            TaskHead::NextToken => 0,
        }
    }

    /// Number of recorded intermediate modules.
    pub fn n_modules(&self) -> usize {
        match self.granularity {
            Granularity::Block => self.n_layers,
            Granularity::Sublayer => 2 * self.n_layers,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig {
            d_model: 10,
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_short_context_and_zero_layers() {
        for cfg in [
            ModelConfig { max_seq_len: 1, ..ModelConfig::default() },
            ModelConfig { n_layers: 0, ..ModelConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
