//! Binary weights container.
//!
//! Layout (little-endian): `"ACFW"`, version byte `0x01`, `u32` entry count,
//! then per entry `u16` name length, UTF-8 name, `u8` rank, `u32` dims and
//! `f32` values. Entries are written in name order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::weights::ModelWeights;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ACFW";
pub const VERSION: u8 = 1;

pub fn encode(weights: &ModelWeights<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + weights.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for (name, t) in weights.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::parse(self.path, offset, message)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.error(self.bytes.len(), format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelWeights<f32>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.error(0, "bad magic, expected ACFW"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let count = r.u32("entry count")?;
    let mut weights = ModelWeights::new();
    for _ in 0..count {
        let entry_at = r.pos;
        let len = r.u16("name length")? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.error(name_at, "name is not UTF-8"))?
            .to_string();
        let rank_at = r.pos;
        let rank = r.u8("rank")? as usize;
        if !(1..=4).contains(&rank) {
            return Err(r.error(rank_at, format!("rank {rank} of '{name}' outside 1..=4")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let at = r.pos;
            let d = r.u32("dims")? as usize;
            if d == 0 {
                return Err(r.error(at, format!("zero dimension in '{name}'")));
            }
            dims.push(d);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.error(rank_at, format!("dims of '{name}' overflow")))?;
        let raw = r.take(numel.saturating_mul(4), "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&dims, data).map_err(|e| r.error(rank_at, e.to_string()))?;
        if weights.insert(name.clone(), t).is_err() {
            return Err(r.error(entry_at, format!("duplicate entry '{name}'")));
        }
    }
    if r.pos != bytes.len() {
        return Err(r.error(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(weights)
}

pub fn save_weights(path: &Path, weights: &ModelWeights<f32>) -> Result<()> {
    super::write_file(path, &encode(weights))
}

pub fn load_weights(path: &Path) -> Result<ModelWeights<f32>> {
    decode(&super::read_file(path)?, path)
}
