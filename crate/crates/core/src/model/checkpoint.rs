//! Checkpoint format: one line of JSON header
//! `{format_version, config, tensors: {name: {shape, offset}}}` followed by
//! the tensors as little-endian `f32`. Offsets are byte offsets into the
//! data section.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, ModelParams, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unsupported checkpoint format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("tensor {name}: shape {found:?} does not match expected {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Config(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: serde_json::Map<String, serde_json::Value>,
}

pub fn to_bytes<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let mut tensors = serde_json::Map::new();
    let mut data = Vec::new();
    for (name, shape, values) in params.tensors() {
        let entry = TensorEntry { shape, offset: data.len() };
        tensors.insert(name, serde_json::to_value(entry).expect("entry serializes"));
        for v in values {
            let f = v.to_f32().expect("float converts");
            data.extend_from_slice(&f.to_le_bytes());
        }
    }
    let header = Header { format_version: FORMAT_VERSION, config: params.config.clone(), tensors };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&data);
    out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>, CheckpointError> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| CheckpointError::Corrupt("missing header".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| CheckpointError::Corrupt("header lacks format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(CheckpointError::Version { found: found as u32 });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let data = &bytes[nl + 1..];
    let mut params = ModelParams::<T>::zeros(header.config)?;
    let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    let mut consumed = 0usize;
    for ((name, shape), (_, dst)) in expected.into_iter().zip(params.tensors_mut()) {
        let entry = header.tensors.get(&name).ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {name}")))?;
        let entry: TensorEntry = serde_json::from_value(entry.clone()).map_err(|e| CheckpointError::Corrupt(format!("{name}: {e}")))?;
        if entry.shape != shape {
            return Err(CheckpointError::Shape { name, expected: shape, found: entry.shape });
        }
        let len = dst.len() * 4;
        let end = entry.offset.checked_add(len).filter(|&e| e <= data.len()).ok_or_else(|| CheckpointError::Corrupt(format!("tensor {name} truncated")))?;
        for (d, chunk) in dst.iter_mut().zip(data[entry.offset..end].chunks_exact(4)) {
            let f = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !f.is_finite() {
                return Err(CheckpointError::Corrupt(format!("tensor {name} holds a non-finite value")));
            }
            *d = T::of(f as f64);
        }
        consumed += len;
    }
    if header.tensors.len() != params.tensors().len() {
        return Err(CheckpointError::Corrupt("unexpected tensors in index".into()));
    }
    if consumed != data.len() {
        return Err(CheckpointError::Corrupt(format!("data section is {} bytes, index covers {consumed}", data.len())));
    }
    Ok(params)
}

pub fn save_params<T: Scalar>(path: &Path, params: &ModelParams<T>) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&to_bytes(params)).map_err(io)?;
    Ok(())
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<ModelParams<T>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    from_bytes(&bytes)
}

/// Loads a checkpoint that must match the tensor shapes of `expected`.
pub fn load_params_for<T: Scalar>(path: &Path, expected: &ModelConfig) -> Result<ModelParams<T>, CheckpointError> {
    let params = load_params::<T>(path)?;
    let want = ModelParams::<T>::zeros(expected.clone())?;
    for ((name, es, _), (_, fs, _)) in want.tensors().into_iter().zip(params.tensors()) {
        if es != fs {
            return Err(CheckpointError::Shape { name, expected: es, found: fs });
        }
    }
    Ok(params)
}

/// SHA-256 of the serialized checkpoint, hex encoded.
pub fn checkpoint_hash<T: Scalar>(params: &ModelParams<T>) -> String {
    hex::encode(Sha256::digest(to_bytes(params)))
}
