//! Checkpoint files.
//!
//! ```text
//! magic      8 bytes   "BTNMTCK\0"
//! version    u32 LE
//! header_len u64 LE
//! header     JSON, header_len bytes
//! values     f64 LE × header.values
//! ```
//!
//! The header echoes the model config and vocabulary and lists every tensor
//! with its shape and offset into `values`, so a reader needs nothing but
//! the file to rebuild the model.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, TensorSpec};
use super::train::Checkpoint;
use super::vocab::Vocab;
use crate::artifact::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BTNMTCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    config: ModelConfig,
    vocab: Vocab,
    data_hash: String,
    update_count: usize,
    /// Absent for averaged checkpoints, which were never scored.
    dev_perplexity: Option<f64>,
    tensors: Vec<TensorSpec>,
    aliases: Vec<(String, String)>,
    values: usize,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let header = Header {
        dtype: "f64-le".into(),
        config: p.config.clone(),
        vocab: (*p.vocab).clone(),
        data_hash: ckpt.data_hash.clone(),
        update_count: ckpt.update_count,
        dev_perplexity: Some(ckpt.dev_perplexity).filter(|x| x.is_finite()),
        tensors: p.layout().tensors().to_vec(),
        aliases: p.layout().aliases().to_vec(),
        values: p.values().len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * p.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::format("checkpoint", 0, msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    if header.dtype != "f64-le" {
        return Err(bad(&format!("unsupported dtype {}", header.dtype)));
    }
    let raw = &bytes[20 + hlen..];
    if raw.len() != 8 * header.values {
        return Err(bad("value section length does not match the header"));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = ModelParams::from_values(header.config, Arc::new(header.vocab), values)?;
    if params.layout().tensors() != header.tensors || params.layout().aliases() != header.aliases {
        return Err(Error::ShapeMismatch("tensor table does not match the config".into()));
    }
    Ok(Checkpoint {
        params,
        update_count: header.update_count,
        dev_perplexity: header.dev_perplexity.unwrap_or(f64::NAN),
        data_hash: header.data_hash,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Format {
            what: path.display().to_string(),
            line: 0,
            msg,
        },
        other => other,
    })
}
