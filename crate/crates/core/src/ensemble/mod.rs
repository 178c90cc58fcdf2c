//! Combining several track-wise predictors.
//!
//! [`average_ensemble`] averages outputs track by track and so breaks down
//! when predictors disagree on which track carries which event.
//! [`EnsembleNet`] instead reads all predictions at once and is trained under
//! the permutation-invariant loss, so it can learn its own track assignment.

mod gap;
mod io;
mod net;
mod synth;

pub use gap::{run_gap_experiment, GapConfig, GapReport, GapRow};

pub use io::{read_predictions, write_predictions, PredictionSet};
pub use net::{EnsembleNet, EnsembleNetConfig};
pub use synth::{synth_permuted_predictors, PredictorNoise};

use crate::error::{Error, Result};
use crate::learning::train::{train, Example, TrainConfig, TrainReport, ValClip};
use crate::track::{sequence_shape, TrackwiseFrame};

/// Concatenated predictions of several models, one row per frame.
///
/// Row layout (version 1): for each model in input order, its `M×K` class
/// probabilities track-major, then its `M×3` directions track-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleInput {
    pub models: usize,
    pub tracks: usize,
    pub classes: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

pub const ENSEMBLE_LAYOUT_VERSION: u32 = 1;

impl EnsembleInput {
    pub fn row_len(&self) -> usize {
        self.models * self.tracks * (self.classes + 3)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.row_len();
        &self.data[t * d..(t + 1) * d]
    }
}

fn common_shape(preds: &[Vec<TrackwiseFrame>]) -> Result<(usize, usize, usize)> {
    let first = preds.first().ok_or_else(|| Error::Shape("no predictions given".into()))?;
    let frames = first.len();
    let mut shape = None;
    for p in preds {
        if p.len() != frames {
            return Err(Error::Shape(format!("prediction lengths differ ({} vs {frames})", p.len())));
        }
        let s = sequence_shape(p)?;
        if shape.is_some() && s != shape {
            return Err(Error::Shape("predictions disagree on track/class counts".into()));
        }
        shape = shape.or(s);
    }
    let (m, k) = shape.unwrap_or((0, 0));
    Ok((frames, m, k))
}

/// Element-wise mean over models, track index by track index.
pub fn average_ensemble(preds: &[Vec<TrackwiseFrame>]) -> Result<Vec<TrackwiseFrame>> {
    common_shape(preds)?;
    let scale = 1.0 / preds.len() as f64;
    let mut out = preds[0].clone();
    for (t, frame) in out.iter_mut().enumerate() {
        for (i, v) in frame.sed.iter_mut().enumerate() {
            *v = preds.iter().map(|p| p[t].sed[i]).sum::<f64>() * scale;
        }
        for (i, v) in frame.doa.iter_mut().enumerate() {
            *v = preds.iter().map(|p| p[t].doa[i]).sum::<f64>() * scale;
        }
    }
    Ok(out)
}

pub fn build_ensemble_input(preds: &[Vec<TrackwiseFrame>]) -> Result<EnsembleInput> {
    if preds.len() < 2 {
        return Err(Error::Shape(format!("an ensemble needs at least 2 models, got {}", preds.len())));
    }
    let (frames, tracks, classes) = common_shape(preds)?;
    let mut data = Vec::with_capacity(frames * preds.len() * tracks * (classes + 3));
    for t in 0..frames {
        for p in preds {
            data.extend_from_slice(&p[t].sed);
            data.extend_from_slice(&p[t].doa);
        }
    }
    Ok(EnsembleInput { models: preds.len(), tracks, classes, frames, data })
}

/// Inverse of [`build_ensemble_input`].
pub fn split_ensemble_input(input: &EnsembleInput) -> Result<Vec<Vec<TrackwiseFrame>>> {
    let (m, k) = (input.tracks, input.classes);
    if input.data.len() != input.frames * input.row_len() {
        return Err(Error::Shape("ensemble input length disagrees with its dimensions".into()));
    }
    let block = m * (k + 3);
    let mut out = vec![Vec::with_capacity(input.frames); input.models];
    for t in 0..input.frames {
        let row = input.row(t);
        for (i, seq) in out.iter_mut().enumerate() {
            let b = &row[i * block..(i + 1) * block];
            seq.push(TrackwiseFrame::from_parts(m, k, b[..m * k].to_vec(), b[m * k..].to_vec())?);
        }
    }
    Ok(out)
}

/// Trains `net` on ensemble inputs paired with ground-truth targets, using
/// the same objective and optimizer as single-model training.
pub fn train_ensemble(
    net: &mut EnsembleNet,
    examples: &[Example<EnsembleInput>],
    val: &[ValClip<EnsembleInput>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train(net, examples, val, cfg)
}
