//! Versioned checkpoint container.
//!
//! ```text
//! "TRNC" | u32 version | u32 meta_len | meta JSON (model + training config)
//! u32 tensor_count | per tensor: u16 name_len, name, u32 rows, u32 cols, f64 data
//! u8 has_adam | [u64 step | m data | v data]
//! ```
//! All integers and floats little-endian; tensor data row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamState, TrainConfig};
use crate::model::{ModelError, TrnConfig, TrnParams};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TRNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint tensor mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TrnConfig,
    pub train: TrainConfig,
    pub params: TrnParams,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: TrnConfig,
    train: TrainConfig,
}

fn put_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let meta = serde_json::to_vec(&Meta {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    let tensors = ckpt.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        put_f64s(&mut out, t.data);
    }
    match &ckpt.adam {
        None => out.push(0),
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.step.to_le_bytes());
            for t in a.m.tensors() {
                put_f64s(&mut out, t.data);
            }
            for t in a.v.tensors() {
                put_f64s(&mut out, t.data);
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s_into(&mut self, dst: &mut [f64]) -> Result<(), CheckpointError> {
        let bytes = self.take(dst.len() * 8)?;
        for (d, b) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
            *d = f64::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let meta_len = cur.u32()? as usize;
    let meta: Meta = serde_json::from_slice(cur.take(meta_len)?)?;
    meta.model.validate()?;

    let mut params = TrnParams::zeros(&meta.model);
    let expected: Vec<(&'static str, usize, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.name, t.rows, t.cols))
        .collect();
    let count = cur.u32()? as usize;
    if count != expected.len() {
        return Err(CheckpointError::Shape(format!(
            "{count} tensors stored, configuration implies {}",
            expected.len()
        )));
    }
    for ((name, rows, cols), (_, dst)) in expected.iter().zip(params.tensors_mut()) {
        let name_len = cur.u16()? as usize;
        let stored = String::from_utf8_lossy(cur.take(name_len)?).into_owned();
        let (r, c) = (cur.u32()? as usize, cur.u32()? as usize);
        if stored != *name || r != *rows || c != *cols {
            return Err(CheckpointError::Shape(format!(
                "stored {stored} {r}x{c}, expected {name} {rows}x{cols}"
            )));
        }
        cur.f64s_into(dst)?;
    }
    let adam = match cur.u8()? {
        0 => None,
        1 => {
            let mut a = AdamState::new(&params);
            a.step = cur.u64()?;
            for (_, dst) in a.m.tensors_mut() {
                cur.f64s_into(dst)?;
            }
            for (_, dst) in a.v.tensors_mut() {
                cur.f64s_into(dst)?;
            }
            Some(a)
        }
        other => {
            return Err(CheckpointError::Shape(format!(
                "bad optimizer-state flag {other}"
            )))
        }
    };
    if cur.pos != buf.len() {
        return Err(CheckpointError::Shape(format!(
            "{} trailing bytes",
            buf.len() - cur.pos
        )));
    }
    Ok(Checkpoint {
        model: meta.model,
        train: meta.train,
        params,
        adam,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(ckpt)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_checkpoint(&buf)
}
