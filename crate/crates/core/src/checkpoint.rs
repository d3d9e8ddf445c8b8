//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"LGLSTM01"
//! u32 tensor count
//! per tensor: u32 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64),
//!             u32 rank, rank x u64 extents, raw element data
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Tensors are written in [`Model::named_params`] order. Loading checks the
//! magic, then the CRC, then that every name, dtype and shape matches the
//! model the configuration describes. Nothing is returned unless all checks
//! pass.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Result};
use crate::network::{Model, ModelConfig};
use crate::numerics::{Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"LGLSTM01";

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let params = model.named_params();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, _, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

struct Entry<'a> {
    dtype: u8,
    shape: Vec<usize>,
    data: &'a [u8],
}

fn dtype_bytes(dtype: u8) -> Option<usize> {
    match dtype {
        0 => Some(4),
        1 => Some(8),
        _ => None,
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<Vec<(String, Entry<'_>)>, CheckpointError> {
    let min = MAGIC.len() + 8;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < min {
        return Err(CheckpointError::Truncated {
            offset: MAGIC.len(),
            needed: min - MAGIC.len(),
            len: bytes.len(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Crc { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: MAGIC.len() };
    let count = cur.u32()?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| CheckpointError::Malformed(format!("tensor name at offset {} is not UTF-8", cur.pos - len)))?
            .to_string();
        let dtype = cur.take(1)?[0];
        let elem = dtype_bytes(dtype)
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` has unknown dtype {dtype}")))?;
        let rank = cur.u32()?;
        let mut shape = Vec::new();
        let mut n = 1usize;
        for _ in 0..rank {
            let e = usize::try_from(cur.u64()?)
                .map_err(|_| CheckpointError::Malformed(format!("tensor `{name}` extent overflows")))?;
            n = n
                .checked_mul(e)
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` is too large")))?;
            shape.push(e);
        }
        let size = n
            .checked_mul(elem)
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` is too large")))?;
        let data = cur.take(size)?;
        entries.push((name, Entry { dtype, shape, data }));
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes before the CRC",
            body.len() - cur.pos
        )));
    }
    Ok(entries)
}

/// Decodes a checkpoint against the model `config` describes.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], config: &ModelConfig) -> Result<Model<T>> {
    let entries = parse(bytes)?;
    let mut by_name: HashMap<&str, &Entry> = HashMap::new();
    for (name, e) in &entries {
        if by_name.insert(name, e).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate tensor `{name}`")).into());
        }
    }
    let mut model = Model::<T>::zeros(config)?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _, _)| n).collect();
    for (name, (_, t)) in names.iter().zip(model.params_mut()) {
        let e = by_name
            .remove(name.as_str())
            .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        if e.dtype != T::DTYPE {
            return Err(CheckpointError::Dtype {
                name: name.clone(),
                expected: T::DTYPE,
                found: e.dtype,
            }
            .into());
        }
        if e.shape != t.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: t.shape().to_vec(),
                found: e.shape.clone(),
            }
            .into());
        }
        let values = e.data.chunks_exact(T::BYTES).map(T::read_le).collect();
        *t = Tensor::new(&e.shape, values)?;
    }
    if let Some((name, _)) = entries.iter().find(|(n, _)| by_name.contains_key(n.as_str())) {
        return Err(CheckpointError::Unexpected(name.clone()).into());
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Model<T>> {
    decode_checkpoint(&fs::read(path)?, config)
}
