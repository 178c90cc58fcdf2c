//! `SLDM` checkpoints: magic, u32 version, u32-length JSON architecture blob,
//! u32 tensor count, then per tensor a u32 name length, the UTF-8 name, a u32
//! rank, u64 dims, and little-endian f64 data. Integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use super::params::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLDM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: serde_json::Value,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new<A: Serialize>(arch: &A, params: ParamSet) -> Result<Self> {
        let arch = serde_json::to_value(arch).map_err(|e| Error::Config(format!("architecture not serializable: {e}")))?;
        Ok(Checkpoint { arch, params })
    }

    pub fn arch_as<A: DeserializeOwned>(&self) -> Result<A> {
        serde_json::from_value(self.arch.clone()).map_err(|e| Error::Config(format!("checkpoint architecture: {e}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let arch = serde_json::to_vec(&self.arch).expect("JSON values always serialize");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
        out.extend_from_slice(&arch);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for t in &self.params.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, "missing SLDM header"));
        }
        if r.u32()? != VERSION {
            return Err(Error::format(path, "unsupported version"));
        }
        let n = r.u32()? as usize;
        let arch = serde_json::from_slice(r.take(n)?).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format(path, "tensor too large"))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::format(path, "tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes"));
        }
        Ok(Checkpoint { arch, params: ParamSet { tensors } })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::format(self.path, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
