use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{extract, ExtractMode, PropertyRecord};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{checkpoint, TargetModel};

pub const CACHE_VERSION: u32 = 1;

/// Extracted records keyed by `(checkpoint checksum, sample id)`.
///
/// A cached record is reused only if it was extracted with at least the
/// requested mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyCache {
    version: u32,
    entries: BTreeMap<String, BTreeMap<u64, PropertyRecord>>,
}

impl PropertyCache {
    pub fn new() -> Self {
        Self {
            version: CACHE_VERSION,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, checksum: &str, sample_id: u64) -> Option<&PropertyRecord> {
        self.entries.get(checksum)?.get(&sample_id)
    }

    pub fn get_or_extract(&mut self, model: &TargetModel, checksum: &str, sample: &Sample, mode: ExtractMode) -> Result<PropertyRecord> {
        if let Some(r) = self.get(checksum, sample.id) {
            let covers = (!mode.forward() || r.forward.is_some()) && (!mode.backward() || r.backward.is_some());
            if covers {
                return Ok(r.clone());
            }
        }
        let r = extract(model, sample, mode)?;
        self.entries.entry(checksum.to_string()).or_default().insert(sample.id, r.clone());
        Ok(r)
    }

    /// Extracts every sample at `model`'s checkpoint through the cache.
    pub fn extract_all<'a>(
        &mut self,
        model: &TargetModel,
        samples: impl IntoIterator<Item = &'a Sample>,
        mode: ExtractMode,
    ) -> Result<Vec<PropertyRecord>> {
        let sum = checkpoint::checksum(model);
        samples.into_iter().map(|s| self.get_or_extract(model, &sum, s, mode)).collect()
    }

    /// Drops every checkpoint other than `keep`.
    pub fn retain_checkpoint(&mut self, keep: &str) {
        self.entries.retain(|k, _| k == keep);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let cache: Self = serde_json::from_slice(&bytes)?;
        if cache.version != CACHE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported property cache version {}", cache.version)));
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn reuses_records_and_round_trips() {
        let cfg = ModelConfig {
            vocab_size: 10,
            d_model: 4,
            max_seq_len: 6,
            ..ModelConfig::default()
        };
        let m = TargetModel::new(cfg, 1).unwrap();
        let s = Sample::new(3, vec![1, 2, 3], 0);
        let mut cache = PropertyCache::new();
        let a = cache.extract_all(&m, [&s], ExtractMode::Both).unwrap();
        let b = cache.extract_all(&m, [&s], ExtractMode::Forward).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        cache.save(&path).unwrap();
        assert_eq!(PropertyCache::load(&path).unwrap(), cache);
    }
}
