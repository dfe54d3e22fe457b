//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `QCGCKPT\0`, `u32` format version, `u64` header
//! length, a JSON header (model config, tensor table, free-form metadata),
//! then every tensor's data as little-endian `f64` in table order. Values
//! are stored bit-for-bit.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelConfig, Params, TransformerModel};
use super::tensor::Tensor2;

const MAGIC: &[u8; 8] = b"QCGCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint tensor table does not match the model config: {0}")]
    Mismatch(String),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &TransformerModel,
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let named = model.params.named();
    let header = Header {
        config: model.config.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(1 << 16);
    for (_, t) in named {
        for chunk in t.data().chunks(8192) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(TransformerModel, serde_json::Value), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let header_len = u64::from_le_bytes(b8) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;

    let mut params = Params::zeros(&header.config);
    let expected: Vec<(String, (usize, usize))> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(CheckpointError::Mismatch(format!(
            "expected {} tensors, found {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if *name != entry.name || *shape != (entry.rows, entry.cols) {
            return Err(CheckpointError::Mismatch(format!(
                "expected {name} {shape:?}, found {} ({}, {})",
                entry.name, entry.rows, entry.cols
            )));
        }
    }
    let mut bytes = Vec::new();
    for t in params.tensors_mut() {
        bytes.resize(t.len() * 8, 0);
        r.read_exact(&mut bytes)?;
        for (dst, src) in t.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *dst = f64::from_le_bytes(src.try_into().expect("8-byte chunk"));
        }
    }
    Ok((
        TransformerModel {
            config: header.config,
            params,
        },
        header.metadata,
    ))
}

pub fn save(path: &Path, model: &TransformerModel, metadata: &serde_json::Value) -> Result<(), CheckpointError> {
    let file = fs::File::create(path)?;
    write_checkpoint(io::BufWriter::new(file), model, metadata)
}

pub fn load(path: &Path) -> Result<(TransformerModel, serde_json::Value), CheckpointError> {
    let file = fs::File::open(path)?;
    read_checkpoint(io::BufReader::new(file))
}

pub fn to_bytes(model: &TransformerModel, metadata: &serde_json::Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, model, metadata).expect("writing to a Vec does not fail");
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(TransformerModel, serde_json::Value), CheckpointError> {
    read_checkpoint(bytes)
}

/// Bitwise equality of every parameter, distinguishing `-0.0` and NaN
/// payloads.
pub fn bit_identical(a: &TransformerModel, b: &TransformerModel) -> bool {
    let bits = |t: &Tensor2| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    a.config == b.config
        && a
            .params
            .named()
            .iter()
            .zip(b.params.named().iter())
            .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape() && bits(ta) == bits(tb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = TransformerModel::new(super::super::model::ModelConfig::desk_classifier(13), 21).unwrap();
        let meta = serde_json::json!({"kind": "classifier", "pieces": ["a", "b"]});
        let bytes = to_bytes(&model, &meta);
        let (back, meta_back) = from_bytes(&bytes).unwrap();
        assert!(bit_identical(&model, &back));
        assert_eq!(meta, meta_back);
        assert_eq!(to_bytes(&back, &meta_back), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(from_bytes(b"not a checkpoint"), Err(CheckpointError::BadMagic)));
        let model = TransformerModel::new(super::super::model::ModelConfig::desk_generator(5), 1).unwrap();
        let bytes = to_bytes(&model, &serde_json::Value::Null);
        assert!(from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }
}
