//! `SLDF` feature files: magic, u32 version, u32 layout tag, u32 channels,
//! u32 frames, u32 bins, then little-endian f32 data in channel-major order.

use std::fs;
use std::path::Path;

use super::{FeatureLayout, FeatureTensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLDF";
pub const VERSION: u32 = 1;

pub fn encode(t: &FeatureTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t.layout.tag(), t.channels as u32, t.frames as u32, t.bins as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<FeatureTensor> {
    let bad = |why: &str| Error::format(path, why);
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad("missing SLDF header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad("unsupported version"));
    }
    let layout = FeatureLayout::from_tag(word(1)).ok_or_else(|| bad("unknown layout tag"))?;
    let (channels, frames, bins) = (word(2) as usize, word(3) as usize, word(4) as usize);
    if channels != layout.channels() {
        return Err(bad("channel count disagrees with layout"));
    }
    let body = &bytes[24..];
    if body.len() != 4 * channels * frames * bins {
        return Err(bad("payload length disagrees with dims"));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    FeatureTensor::new(layout, frames, bins, data)
}

pub fn write(path: &Path, t: &FeatureTensor) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<FeatureTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
