//! Parameter checkpoints: `manifest.json` (names, shapes, byte offsets and
//! caller metadata) next to `params.bin`, a flat little-endian `f64` blob.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ParamSet, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `params.bin`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub total_bytes: u64,
}

const FORMAT: &str = "figcap-params-f64le-v1";

pub fn save_checkpoint(dir: &Path, meta: &serde_json::Value, params: &ParamSet) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(params.num_scalars() * 8);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        meta: meta.clone(),
        tensors,
        total_bytes: blob.len() as u64,
    };
    fs::write(dir.join(PARAMS_FILE), &blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Manifest, ParamSet), CheckpointError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT {
        return Err(CheckpointError::Corrupt(format!("unknown format {}", manifest.format)));
    }
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() as u64 != manifest.total_bytes {
        return Err(CheckpointError::Corrupt(format!(
            "params.bin has {} bytes, manifest says {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    let mut params = ParamSet::new();
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * 8;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| CheckpointError::Corrupt(format!("tensor {} out of bounds", e.name)))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(e.shape.clone(), data).map_err(|err| CheckpointError::Corrupt(err.to_string()))?;
        params.insert(e.name.clone(), t);
    }
    Ok((manifest, params))
}
