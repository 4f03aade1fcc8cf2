//! Binary checkpoint format.
//!
//! ```text
//! "USND" | u16 version | u8 K | u32 meta_len | meta JSON
//! repeated until EOF:
//!   u16 name_len | name | u8 rank | u32 dim * rank | f32 * prod(dims)
//! ```
//! All integers and floats are little-endian. Tensors are stored as `f32`
//! regardless of the in-memory precision.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Model, ModelConfig};
use super::Tensor;
use crate::dataset::ClassSubset;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"USND";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    Version(u16),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint declares {header} classes but metadata describes {meta}")]
    ClassCount { header: u8, meta: usize },
    #[error("tensor {name}: shape {found:?} does not match the declared config {expected:?}")]
    TensorShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("unknown tensor {0:?} in checkpoint")]
    UnknownTensor(String),
    #[error("tensor {0:?} appears twice")]
    DuplicateTensor(String),
    #[error("tensor {0:?} missing from checkpoint")]
    MissingTensor(String),
    #[error("invalid model config in checkpoint: {0}")]
    Model(#[from] super::NnError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Everything stored besides the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub classes: ClassSubset,
    pub model: ModelConfig,
    /// In-memory precision the model was trained in.
    pub precision: String,
    pub bn_updates: u64,
    /// Resolved run configuration, kept verbatim.
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
}

impl CheckpointMeta {
    pub fn hash_config(config: &serde_json::Value) -> String {
        let digest = Sha256::digest(config.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub model: Model<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: Model<T>, classes: ClassSubset, seed: u64, epoch: usize, config: serde_json::Value) -> Self {
        let meta = CheckpointMeta {
            seed,
            epoch,
            classes,
            model: model.config.clone(),
            precision: T::NAME.to_string(),
            bn_updates: model.bn_updates,
            config_hash: CheckpointMeta::hash_config(&config),
            config,
        };
        Self { meta, model }
    }
}

pub fn encode_checkpoint<T: Scalar>(ck: &Checkpoint<T>) -> Vec<u8> {
    let mut meta = ck.meta.clone();
    meta.model = ck.model.config.clone();
    meta.bn_updates = ck.model.bn_updates;
    let meta_json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(ck.model.classes() as u8);
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    for (name, t) in ck.model.named_tensors() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_storage().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let k = r.u8("class count")?;
    let meta_len = r.u32("metadata length")? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len, "metadata")?)?;
    if meta.classes.len() != k as usize || meta.model.classes != k as usize {
        return Err(CheckpointError::ClassCount { header: k, meta: meta.classes.len() });
    }

    let mut model = Model::<T>::init(meta.model.clone(), 0)?;
    model.bn_updates = meta.bn_updates;
    let layout = meta.model.tensor_layout();
    let mut seen = vec![false; layout.len()];
    {
        let mut slots = model.named_tensors_mut();
        while !r.buf.is_empty() {
            let name_len = r.u16("tensor name length")? as usize;
            let name = String::from_utf8_lossy(r.take(name_len, "tensor name")?).into_owned();
            let rank = r.u8("tensor rank")? as usize;
            let dims = (0..rank).map(|_| r.u32("tensor dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let idx = layout.iter().position(|(n, _, _)| *n == name).ok_or_else(|| CheckpointError::UnknownTensor(name.clone()))?;
            if seen[idx] {
                return Err(CheckpointError::DuplicateTensor(name));
            }
            if dims != layout[idx].1 {
                return Err(CheckpointError::TensorShape { name, expected: layout[idx].1.clone(), found: dims });
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::from_storage(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            *slots[idx].1 = Tensor::new(&dims, data)?;
            seen[idx] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(CheckpointError::MissingTensor(layout[i].0.clone()));
    }
    Ok(Checkpoint { meta, model })
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ck: &Checkpoint<T>) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(ck)).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}
