//! Checkpoint files: the run config plus the trainable tensors only.
//! Frozen weights are rebuilt deterministically from the config seed.
//!
//! Layout: magic `TCPT`, u32 version, u64 manifest length, JSON manifest
//! (config text and per-entry byte counts), then the tensors as
//! concatenated `.ten` blobs in manifest order.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TCPT";
const VERSION: u32 = 1;
const MAX_MANIFEST: usize = 1 << 20;

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: String,
    entries: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    bytes: u64,
}

pub struct Checkpoint {
    pub config: RunConfig,
    pub params: Vec<(String, Tensor)>,
}

pub fn to_bytes(cfg: &RunConfig, params: &[(String, Tensor)]) -> Vec<u8> {
    let blobs: Vec<Vec<u8>> = params.iter().map(|(_, t)| t.to_ten_bytes()).collect();
    let manifest = Manifest {
        config: cfg.to_text(),
        entries: params
            .iter()
            .zip(&blobs)
            .map(|((name, _), blob)| Entry {
                name: name.clone(),
                bytes: blob.len() as u64,
            })
            .collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    for blob in &blobs {
        out.extend_from_slice(blob);
    }
    out
}

pub fn parse(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |reason: String| Error::Format(format!("invalid checkpoint: {reason}"));
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("wrong magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if mlen > MAX_MANIFEST || 16 + mlen > bytes.len() {
        return Err(bad(format!("manifest length {mlen} out of range")));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..16 + mlen])
        .map_err(|e| bad(format!("bad manifest: {e}")))?;
    let config = RunConfig::parse(&manifest.config, "<checkpoint>")?;

    let mut seen = std::collections::HashSet::new();
    let mut pos = 16 + mlen;
    let mut params = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        if !seen.insert(entry.name.clone()) {
            return Err(bad(format!("duplicate entry '{}'", entry.name)));
        }
        let len = entry.bytes as usize;
        let end = pos
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("entry '{}' overruns the file", entry.name)))?;
        let tensor = Tensor::from_ten_bytes(&bytes[pos..end])?;
        params.push((entry.name.clone(), tensor));
        pos = end;
    }
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Checkpoint { config, params })
}

pub fn save(path: impl AsRef<Path>, cfg: &RunConfig, params: &[(String, Tensor)]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(cfg, params))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse(&bytes)
}

/// Copy checkpoint values into a freshly built model. Every trainable
/// parameter must be present with a matching shape, and vice versa.
pub fn apply(model: &Model, ckpt: &Checkpoint) -> Result<()> {
    let target: std::collections::BTreeMap<String, Tensor> =
        model.named_trainable().into_iter().collect();
    let mut restored = std::collections::HashSet::new();
    for (name, value) in &ckpt.params {
        let param = target.get(name).ok_or_else(|| {
            Error::Format(format!("checkpoint entry '{name}' has no matching parameter"))
        })?;
        if param.shape() != value.shape() {
            return Err(Error::Format(format!(
                "shape mismatch for '{name}': model {:?}, checkpoint {:?}",
                param.shape(),
                value.shape()
            )));
        }
        param.set_data(&value.data());
        restored.insert(name.clone());
    }
    let missing: Vec<&String> = target.keys().filter(|k| !restored.contains(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "checkpoint missing parameters: {}",
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(())
}
