use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tensor::rng;

use super::{Membership, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Target fine-tuning set size `N`.
    pub n_train: usize,
    /// Scaling factor: audit-train uses `round(alpha * N)` members and as
    /// many non-members.
    pub alpha: f64,
    /// Members (and, separately, non-members) in the audit-test split.
    pub audit_test_per_role: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            n_train: 512,
            alpha: 0.25,
            audit_test_per_role: 128,
        }
    }
}

impl PartitionSpec {
    pub fn audit_train_per_role(&self) -> usize {
        (self.alpha * self.n_train as f64).round() as usize
    }

    /// Smallest pool that can hold every split.
    pub fn required_pool(&self) -> usize {
        self.n_train + self.audit_train_per_role() + self.audit_test_per_role
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let k = self.audit_train_per_role();
        if k == 0 || self.audit_test_per_role == 0 {
            return Err(Error::Config("audit splits must be non-empty".into()));
        }
        if 2 * k > self.n_train {
            return Err(Error::Config(format!("2 * alpha * N = {} exceeds N = {}", 2 * k, self.n_train)));
        }
        if k + self.audit_test_per_role > self.n_train {
            return Err(Error::Config(format!(
                "{} audit members requested from only {} fine-tuning samples",
                k + self.audit_test_per_role,
                self.n_train
            )));
        }
        Ok(())
    }
}

/// A balanced member/non-member split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSplit {
    pub members: Vec<Sample>,
    pub non_members: Vec<Sample>,
}

impl AuditSplit {
    pub fn len(&self) -> usize {
        self.members.len() + self.non_members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members first, then non-members.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.members.iter().chain(&self.non_members)
    }

    /// Membership bits aligned with [`AuditSplit::samples`].
    pub fn labels(&self) -> Vec<u8> {
        self.samples().map(|s| s.membership.bit().expect("audit samples are labeled")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSplits {
    pub train: AuditSplit,
    pub test: AuditSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Fine-tuning set; membership labels are `Unknown`.
    pub ft_train: Vec<Sample>,
    /// Held-out samples; source of non-members and of target test accuracy.
    pub ft_test: Vec<Sample>,
    pub audit: AuditSplits,
}

/// Sample ids per split, for reproducing an audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub seed: u64,
    pub ft_train: Vec<u64>,
    pub ft_test: Vec<u64>,
    pub audit_train_members: Vec<u64>,
    pub audit_train_non_members: Vec<u64>,
    pub audit_test_members: Vec<u64>,
    pub audit_test_non_members: Vec<u64>,
}

impl Partition {
    pub fn manifest(&self, seed: u64) -> PartitionManifest {
        let ids = |v: &[Sample]| v.iter().map(|s| s.id).collect();
        PartitionManifest {
            seed,
            ft_train: ids(&self.ft_train),
            ft_test: ids(&self.ft_test),
            audit_train_members: ids(&self.audit.train.members),
            audit_train_non_members: ids(&self.audit.train.non_members),
            audit_test_members: ids(&self.audit.test.members),
            audit_test_non_members: ids(&self.audit.test.non_members),
        }
    }
}

/// Splits `pool` into the fine-tuning set and the held-out set, then draws
/// disjoint audit-train and audit-test splits: members from the
/// fine-tuning set, non-members from the held-out set.
pub fn partition(pool: &[Sample], spec: &PartitionSpec, seed: u64) -> Result<Partition> {
    spec.validate()?;
    let required = spec.required_pool();
    if pool.len() < required {
        return Err(Error::InsufficientPool {
            available: pool.len(),
            required,
        });
    }
    let mut rng = rng::stream(seed, "data-partition");
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(spec.n_train);

    let k = spec.audit_train_per_role();
    let t = spec.audit_test_per_role;
    let mut members: Vec<usize> = train_idx.to_vec();
    members.shuffle(&mut rng);
    let mut non_members: Vec<usize> = test_idx.to_vec();
    non_members.shuffle(&mut rng);

    let take = |idx: &[usize], m: Membership| -> Vec<Sample> {
        idx.iter().map(|&i| pool[i].clone().with_membership(m)).collect()
    };
    let audit = AuditSplits {
        train: AuditSplit {
            members: take(&members[..k], Membership::Member),
            non_members: take(&non_members[..k], Membership::NonMember),
        },
        test: AuditSplit {
            members: take(&members[k..k + t], Membership::Member),
            non_members: take(&non_members[k..k + t], Membership::NonMember),
        },
    };
    let plain = |idx: &[usize]| -> Vec<Sample> {
        idx.iter()
            .map(|&i| pool[i].clone().with_membership(Membership::Unknown))
            .collect()
    };
    Ok(Partition {
        ft_train: plain(train_idx),
        ft_test: plain(test_idx),
        audit,
    })
}
