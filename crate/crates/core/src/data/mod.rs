//! Samples, synthetic task generation, member/non-member partitioning and
//! nested-pair batching.

mod jsonl;
pub(crate) mod pairs;
mod partition;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use jsonl::{load_jsonl, read_jsonl, write_jsonl};
pub use pairs::{make_nested_pairs, NestedPair, NestedPairBatch};
pub use partition::{partition, AuditSplit, AuditSplits, Partition, PartitionManifest, PartitionSpec};
pub use synthetic::{generate_synthetic, unigram_overlap, LengthProfile, SyntheticDataset, SyntheticSpec, TaskKind};

/// Token id reserved for trailing padding.
pub const PAD_TOKEN: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    #[default]
    Unknown,
    NonMember,
    Member,
}

impl Membership {
    /// `1` for members, `0` for non-members.
    pub fn bit(self) -> Option<u8> {
        match self {
            Self::Member => Some(1),
            Self::NonMember => Some(0),
            Self::Unknown => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub tokens: Vec<u32>,
    pub label: usize,
    #[serde(default)]
    pub membership: Membership,
}

impl Sample {
    pub fn new(id: u64, tokens: Vec<u32>, label: usize) -> Self {
        Self {
            id,
            tokens,
            label,
            membership: Membership::Unknown,
        }
    }

    /// Tokens with trailing padding removed.
    pub fn content(&self) -> &[u32] {
        let end = self.tokens.iter().rposition(|&t| t != PAD_TOKEN).map_or(0, |i| i + 1);
        &self.tokens[..end]
    }

    pub fn with_membership(mut self, membership: Membership) -> Self {
        self.membership = membership;
        self
    }

    /// The view handed to the fine-tuning loop; it carries no membership.
    pub fn task_example(&self) -> TaskExample {
        TaskExample {
            tokens: self.tokens.clone(),
            label: self.label,
        }
    }
}

/// Fine-tuning input: tokens and task label only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskExample {
    pub tokens: Vec<u32>,
    pub label: usize,
}

impl TaskExample {
    pub fn content(&self) -> &[u32] {
        let end = self.tokens.iter().rposition(|&t| t != PAD_TOKEN).map_or(0, |i| i + 1);
        &self.tokens[..end]
    }
}

pub fn task_examples(samples: &[Sample]) -> Vec<TaskExample> {
    samples.iter().map(Sample::task_example).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_strips_only_trailing_padding() {
        let s = Sample::new(0, vec![5, 0, 7, 0, 0], 1);
        assert_eq!(s.content(), &[5, 0, 7]);
        assert_eq!(Sample::new(1, vec![0, 0], 0).content(), &[] as &[u32]);
    }
}
