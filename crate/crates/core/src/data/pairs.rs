use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tensor::rng;

use super::AuditSplit;
use crate::error::{Error, Result};

/// One member and one non-member, as indices into
/// [`AuditSplit::members`] and [`AuditSplit::non_members`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPair {
    pub member: usize,
    pub non_member: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPairBatch {
    pub groups: Vec<NestedPair>,
}

/// Batches of nested pairs for one epoch. `batch_size` counts samples, so
/// each batch holds `batch_size / 2` groups (the last may hold fewer).
///
/// Member and non-member orders are reshuffled independently from the
/// stream keyed by `seed + epoch`.
pub fn make_nested_pairs(split: &AuditSplit, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<NestedPairBatch>> {
    pair_indices(split.members.len(), split.non_members.len(), batch_size, seed, epoch)
}

pub(crate) fn pair_indices(
    members: usize,
    non_members: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<NestedPairBatch>> {
    if members != non_members {
        return Err(Error::Unbalanced { members, non_members });
    }
    if members == 0 {
        return Err(Error::Empty("audit split"));
    }
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(Error::Config(format!("nested-pair batch size {batch_size} must be even and at least 2")));
    }
    let mut rng = rng::stream(seed.wrapping_add(epoch), "nested-pairs");
    let mut m: Vec<usize> = (0..members).collect();
    let mut n: Vec<usize> = (0..non_members).collect();
    m.shuffle(&mut rng);
    n.shuffle(&mut rng);
    let groups: Vec<NestedPair> = m
        .into_iter()
        .zip(n)
        .map(|(member, non_member)| NestedPair { member, non_member })
        .collect();
    Ok(groups
        .chunks(batch_size / 2)
        .map(|g| NestedPairBatch { groups: g.to_vec() })
        .collect())
}
