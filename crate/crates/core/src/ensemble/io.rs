//! `SLDP` prediction files: magic, then u32 version, models N, tracks M,
//! classes K and frames T (little-endian), then the f32 class-probability
//! block indexed `[n][t][m][k]` and the f32 direction block `[n][t][m][3]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::track::TrackwiseFrame;

pub const MAGIC: &[u8; 4] = b"SLDP";
pub const VERSION: u32 = 1;

/// Predictions of one or more models for a single clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub models: Vec<Vec<TrackwiseFrame>>,
}

impl PredictionSet {
    pub fn single(pred: Vec<TrackwiseFrame>) -> Self {
        PredictionSet { models: vec![pred] }
    }

    pub fn encode(&self, tracks: usize, classes: usize) -> Result<Vec<u8>> {
        let frames = self.models.first().map_or(0, Vec::len);
        for p in &self.models {
            if p.len() != frames || p.iter().any(|f| f.tracks() != tracks || f.classes() != classes) {
                return Err(Error::Shape("predictions in a set must share their shape".into()));
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.models.len() as u32, tracks as u32, classes as u32, frames as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.models {
            for f in p {
                f.sed.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes()));
            }
        }
        for p in &self.models {
            for f in p {
                f.doa.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes()));
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "missing SLDP header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if word(0) != VERSION as usize {
            return Err(Error::format(path, "unsupported version"));
        }
        let (n, m, k, t) = (word(1), word(2), word(3), word(4));
        let body: Vec<f64> = bytes[24..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let sed_len = n * t * m * k;
        if !(bytes.len() - 24).is_multiple_of(4) || body.len() != sed_len + n * t * m * 3 {
            return Err(Error::format(path, "payload length disagrees with dims"));
        }
        let (sed, doa) = body.split_at(sed_len);
        let mut models = Vec::with_capacity(n);
        for i in 0..n {
            let mut seq = Vec::with_capacity(t);
            for f in 0..t {
                let s = &sed[(i * t + f) * m * k..(i * t + f + 1) * m * k];
                let d = &doa[(i * t + f) * m * 3..(i * t + f + 1) * m * 3];
                seq.push(TrackwiseFrame::from_parts(m, k, s.to_vec(), d.to_vec())?);
            }
            models.push(seq);
        }
        Ok(PredictionSet { models })
    }
}

pub fn write_predictions(path: &Path, set: &PredictionSet, tracks: usize, classes: usize) -> Result<()> {
    fs::write(path, set.encode(tracks, classes)?).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PredictionSet::decode(&bytes, path)
}
