//! JSON checkpoint container: config plus flat parameter arrays, guarded by
//! a SHA-256 checksum over the exact parameter bits.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tensor::Tensor;

use super::config::ModelConfig;
use super::transformer::TargetModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    version: u32,
    config: ModelConfig,
    params: Vec<Vec<f64>>,
    checksum: String,
}

/// Hex SHA-256 over the canonical config JSON followed by every parameter
/// value as little-endian bits.
pub fn checksum(model: &TargetModel) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model.config()).expect("config serializes"));
    for p in model.params() {
        for v in p.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn to_json(model: &TargetModel) -> String {
    let c = Container {
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        params: model.params().iter().map(|p| p.data().to_vec()).collect(),
        checksum: checksum(model),
    };
    serde_json::to_string(&c).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<TargetModel> {
    let c: Container = serde_json::from_str(text)?;
    if c.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
    }
    let shapes: Vec<Vec<usize>> = super::transformer::param_specs(&c.config).into_iter().map(|s| s.shape).collect();
    if shapes.len() != c.params.len() {
        return Err(Error::Checkpoint(format!("expected {} parameter arrays, got {}", shapes.len(), c.params.len())));
    }
    let params = shapes
        .into_iter()
        .zip(c.params)
        .map(|(shape, data)| Tensor::new(shape, data))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let model = TargetModel::from_parts(c.config, params)?;
    let actual = checksum(&model);
    if actual != c.checksum {
        return Err(Error::Checkpoint(format!("checksum mismatch: stored {}, computed {actual}", c.checksum)));
    }
    Ok(model)
}

pub fn save(model: &TargetModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TargetModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
