//! Checkpoint files: 8-byte magic, a length-prefixed JSON header, then the
//! parameter blob as little-endian f32.
//!
//! ```text
//! QFPRED01 | u64 LE header length | header JSON | blob
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use super::predictor::{QfModel, TrainingMeta};
use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: &[u8; 8] = b"QFPRED01";
pub const FORMAT_VERSION: u32 = 1;
const MAGIC_STEM: &[u8; 6] = b"QFPRED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 4],
    /// Byte offset into the blob.
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: ArchSpec,
    normalized_input: bool,
    meta: TrainingMeta,
    params: Vec<ParamEntry>,
}

pub fn to_bytes(model: &QfModel) -> Result<Vec<u8>> {
    let mut params = Vec::with_capacity(model.params.len());
    let mut offset = 0;
    for p in model.params.iter() {
        let len = p.value.numel();
        params.push(ParamEntry { name: p.name.clone(), shape: p.value.shape().dims(), offset, len });
        offset += 4 * len;
    }
    let header = Header {
        version: FORMAT_VERSION,
        arch: model.arch().clone(),
        normalized_input: model.normalized_input,
        meta: model.meta.clone(),
        params,
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<QfModel> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC_STEM {
        return Err(CheckpointError::BadMagic.into());
    }
    if &bytes[..8] != MAGIC {
        let found = std::str::from_utf8(&bytes[6..8]).ok().and_then(|s| s.parse().ok());
        return Err(match found {
            Some(found) => CheckpointError::Version { found, expected: FORMAT_VERSION },
            None => CheckpointError::BadMagic,
        }
        .into());
    }
    let rest = &bytes[8..];
    if rest.len() < 8 {
        return Err(CheckpointError::Header("missing header length".into()).into());
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if header_len > rest.len() {
        return Err(CheckpointError::Header(format!("header length {header_len} exceeds file")).into());
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: header.version, expected: FORMAT_VERSION }.into());
    }
    let blob = &rest[header_len..];

    let expected_floats = header.arch.param_count();
    let listed: usize = header.params.iter().map(|p| p.len).sum();
    if listed != expected_floats {
        return Err(CheckpointError::Header(format!(
            "directory lists {listed} values, architecture requires {expected_floats}"
        ))
        .into());
    }
    if blob.len() != 4 * expected_floats {
        return Err(CheckpointError::Length { expected: expected_floats, actual: blob.len() / 4 }.into());
    }

    let mut model = QfModel::new(header.arch, 0)?;
    if header.params.len() != model.params.len() {
        return Err(CheckpointError::Header(format!(
            "directory has {} parameters, architecture has {}",
            header.params.len(),
            model.params.len()
        ))
        .into());
    }
    for (entry, param) in header.params.iter().zip(model.params.iter_mut()) {
        if entry.name != param.name {
            return Err(CheckpointError::Header(format!(
                "expected parameter `{}`, found `{}`",
                param.name, entry.name
            ))
            .into());
        }
        let want = param.value.numel();
        if entry.len != want || entry.shape != param.value.shape().dims() {
            return Err(CheckpointError::Count { name: entry.name.clone(), expected: want, actual: entry.len }.into());
        }
        let end = entry.offset + 4 * entry.len;
        let raw = blob.get(entry.offset..end).ok_or_else(|| {
            CheckpointError::Header(format!("parameter `{}` lies outside the blob", entry.name))
        })?;
        for (dst, chunk) in param.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    model.normalized_input = header.normalized_input;
    model.meta = header.meta;
    Ok(model)
}

pub fn save_checkpoint(model: &QfModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<QfModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
