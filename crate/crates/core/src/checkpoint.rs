//! Self-describing checkpoint container.
//!
//! Layout: the 8-byte magic `DPROPCK1`, a little-endian `u64` header length,
//! a UTF-8 JSON header (dtype, model config, vocabulary, tensor names and
//! shapes, free-form metadata), then every tensor's elements as raw
//! little-endian scalars in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::model::{JointModel, ModelConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"DPROPCK1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub model: ModelConfig,
    pub vocab: Vocab,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn to_bytes<T: Scalar>(model: &JointModel<T>, meta: serde_json::Value) -> Result<Vec<u8>> {
    let store = model.params();
    let header = CheckpointHeader {
        dtype: T::DTYPE.to_owned(),
        model: model.config().clone(),
        vocab: model.vocab().clone(),
        tensors: store
            .iter()
            .map(|(name, m)| TensorEntry { name: name.to_owned(), rows: m.rows(), cols: m.cols() })
            .collect(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + store.num_scalars() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in store.iter() {
        for &x in m.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    Ok((header, &bytes[16 + len..]))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(JointModel<T>, serde_json::Value)> {
    let (header, mut data) = split_header(bytes)?;
    if header.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!("checkpoint stores {} but {} was requested", header.dtype, T::DTYPE)));
    }
    let mut store = ParamStore::new();
    for t in &header.tensors {
        let n = t.rows * t.cols;
        let need = n * T::BYTES;
        if data.len() < need {
            return Err(Error::Checkpoint(format!("tensor {} is truncated", t.name)));
        }
        let values = data[..need].chunks_exact(T::BYTES).map(T::read_le).collect();
        store.insert(t.name.clone(), Matrix::from_vec(t.rows, t.cols, values));
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes after the last tensor", data.len())));
    }
    let model = JointModel::from_parts(header.model, header.vocab, store)?;
    Ok((model, header.meta))
}

pub fn save<T: Scalar>(model: &JointModel<T>, meta: serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<(JointModel<T>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Reads only the header (to pick the scalar type before loading).
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split_header(&bytes)?.0)
}
