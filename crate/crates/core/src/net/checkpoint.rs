//! Versioned binary checkpoints.
//!
//! ```text
//! magic "VIMUCKPT" | u32 version | u32 header length | header (JSON)
//! | u64 architecture hash | u64 parameter count
//! | f32 x count parameters | f32 x count E[g^2] | f32 x count E[dx^2]
//! | u64 FNV-1a checksum of everything before it
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adadelta::AdadeltaState;
use super::model::{ModelConfig, TransformModel};
use super::tensor::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VIMUCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    label: String,
    rho: f64,
    epsilon: f64,
    learning_rate: f64,
}

/// A loaded model plus the free-form label it was saved with (e.g. the
/// target channel or feature name).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TransformModel<f32>,
    pub label: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn checkpoint_bytes<T: Real>(model: &TransformModel<T>, label: &str) -> Result<Vec<u8>> {
    let opt = model.optimizer();
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        label: label.to_owned(),
        rho: opt.rho,
        epsilon: opt.epsilon,
        learning_rate: opt.learning_rate,
    })?;
    let n = model.num_params();
    let mut out = Vec::with_capacity(40 + header.len() + 12 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&model.config().arch_hash().to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for blob in [model.params(), opt.grad_accumulator(), opt.delta_accumulator()] {
        for &v in blob {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::CorruptCheckpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

/// Decodes a checkpoint. When `expected` is given, its architecture must
/// match the stored one.
pub fn checkpoint_from_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(format!(
            "checkpoint format {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = cur.u32()? as usize;
    let header_bytes = cur.take(header_len)?;
    let hash = cur.u64()?;
    let n = cur.u64()? as usize;
    let params = cur.f32s(n)?;
    let acc_grad = cur.f32s(n)?;
    let acc_delta = cur.f32s(n)?;
    let body_end = cur.pos;
    let stored_sum = cur.u64()?;
    if cur.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if fnv1a(&bytes[..body_end]) != stored_sum {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    if header.config.arch_hash() != hash {
        return Err(Error::CorruptCheckpoint("stored config does not match its hash".into()));
    }
    if let Some(want) = expected {
        if want.arch_hash() != hash {
            return Err(Error::Version(format!(
                "checkpoint architecture {:016x} differs from expected {:016x}",
                hash,
                want.arch_hash()
            )));
        }
    }
    let mut optimizer = AdadeltaState::with_params(n, header.rho, header.epsilon, header.learning_rate);
    optimizer.acc_grad = acc_grad;
    optimizer.acc_delta = acc_delta;
    let model = TransformModel::from_parts(header.config, params, optimizer)?;
    Ok(Checkpoint {
        model,
        label: header.label,
    })
}

pub fn save_model<T: Real>(model: &TransformModel<T>, label: &str, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model, label)?;
    fs::write(path, bytes).map_err(|e| Error::at_path(path, e))
}

pub fn load_model(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    checkpoint_from_bytes(&bytes, expected)
}
