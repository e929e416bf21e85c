use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::AuditConfig;
use crate::data::{PartitionSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{FineTuneConfig, ModelConfig, PretrainConfig, TaskHead};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    Parsing,
    ALoss,
    ABlack,
}

impl Attack {
    pub const ALL: [Attack; 3] = [Attack::Parsing, Attack::ALoss, Attack::ABlack];

    pub fn name(self) -> &'static str {
        match self {
            Self::Parsing => "parsing",
            Self::ALoss => "a_loss",
            Self::ABlack => "a_black",
        }
    }
}

impl std::fmt::Display for Attack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// JSONL file; relative paths resolve against the working directory.
    Jsonl { path: PathBuf },
}

/// One explicit seed per pipeline stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub partition: u64,
    pub target_init: u64,
    pub finetune: u64,
    pub audit: u64,
}

impl Seeds {
    /// Every stage seeded with `seed`; stage streams are still distinct
    /// because each stage draws from its own named stream.
    pub fn uniform(seed: u64) -> Self {
        Self {
            data: seed,
            partition: seed,
            target_init: seed,
            finetune: seed,
            audit: seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub partition: PartitionSpec,
    pub model: ModelConfig,
    pub finetune: FineTuneConfig,
    #[serde(default)]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default)]
    pub audit: AuditConfig,
    pub epoch_interval: usize,
    pub attacks: Vec<Attack>,
    pub seeds: Seeds,
    /// Where the CLI writes outputs; never part of the report snapshot.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let partition = PartitionSpec::default();
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                size: partition.required_pool(),
                ..SyntheticSpec::default()
            }),
            partition,
            model: ModelConfig::default(),
            finetune: FineTuneConfig::default(),
            pretrain: None,
            audit: AuditConfig::default(),
            epoch_interval: 2,
            attacks: Attack::ALL.to_vec(),
            seeds: Seeds::uniform(0),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_interval == 0 {
            return Err(Error::Config("epoch_interval must be at least 1".into()));
        }
        if self.finetune.epochs == 0 {
            return Err(Error::Config("finetune.epochs must be at least 1".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("no attacks selected".into()));
        }
        self.model.validate()?;
        self.finetune.validate()?;
        self.partition.validate()?;
        self.audit.validate()?;
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
            if spec.vocab_size > self.model.vocab_size {
                return Err(Error::Config(format!(
                    "dataset vocab_size {} exceeds model vocab_size {}",
                    spec.vocab_size, self.model.vocab_size
                )));
            }
            if let TaskHead::Classification { n_classes } = self.model.task {
                if spec.n_classes != n_classes {
                    return Err(Error::Config(format!(
                        "dataset has {} classes but the model head has {n_classes}",
                        spec.n_classes
                    )));
                }
            }
            if *spec.length_profile.range().end() > self.model.max_seq_len {
                return Err(Error::Config(format!(
                    "length profile {:?} exceeds max_seq_len {}",
                    spec.length_profile, self.model.max_seq_len
                )));
            }
        }
        Ok(())
    }

    /// Epochs at which checkpoints are audited.
    pub fn audit_epochs(&self) -> Vec<usize> {
        (1..=self.finetune.epochs).filter(|e| e % self.epoch_interval == 0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_epoch_schedule() {
        let mut c = RunConfig::default();
        c.finetune.epochs = 12;
        c.epoch_interval = 5;
        assert_eq!(c.audit_epochs(), vec![5, 10]);
        c.finetune.epochs = 1;
        c.epoch_interval = 1;
        assert_eq!(c.audit_epochs(), vec![1]);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let mut v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn zero_interval_rejected() {
        let c = RunConfig { epoch_interval: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
