//! Frame-wise permutation-invariant loss over track-wise outputs.
//!
//! For every frame the loss is the minimum, over all assignments of
//! predicted tracks to target tracks, of the summed per-track objective
//! `λ·BCE + (1−λ)·MSE`. BCE is averaged over classes and MSE over the three
//! coordinates; the clip loss is the mean over frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::TrackwiseFrame;

/// Probabilities are clipped to `[P_CLIP, 1 − P_CLIP]` inside the BCE.
pub const P_CLIP: f64 = 1e-7;
/// Largest track count accepted by the exhaustive search.
pub const MAX_TRACKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the detection term; the localization term gets `1 − lambda`.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("loss lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    // Next lexicographic permutation until exhausted.
    loop {
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else { return out };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

pub fn bce(p: f64, y: f64) -> f64 {
    let pc = p.clamp(P_CLIP, 1.0 - P_CLIP);
    -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
}

fn bce_grad(p: f64, y: f64) -> f64 {
    if !(P_CLIP..=1.0 - P_CLIP).contains(&p) {
        return 0.0;
    }
    -(y / p) + (1.0 - y) / (1.0 - p)
}

/// Loss of predicted track `m` against target track `target_track`.
fn track_loss(pred: &TrackwiseFrame, target: &TrackwiseFrame, m: usize, target_track: usize, lambda: f64) -> f64 {
    let k = pred.classes() as f64;
    let sed: f64 = pred.sed_row(m).iter().zip(target.sed_row(target_track)).map(|(&p, &y)| bce(p, y)).sum::<f64>() / k;
    let (d, y) = (pred.doa_row(m), target.doa_row(target_track));
    let doa: f64 = (0..3).map(|j| (d[j] - y[j]).powi(2)).sum::<f64>() / 3.0;
    lambda * sed + (1.0 - lambda) * doa
}

/// Loss of one frame under a fixed assignment `perm` (pred track `m` is
/// compared with target track `perm[m]`).
pub fn frame_loss(pred: &TrackwiseFrame, target: &TrackwiseFrame, perm: &[usize], lambda: f64) -> f64 {
    perm.iter().enumerate().map(|(m, &a)| track_loss(pred, target, m, a, lambda)).sum()
}

/// Minimum frame loss and its assignment; ties keep the lexicographically
/// smallest permutation.
pub fn best_permutation(pred: &TrackwiseFrame, target: &TrackwiseFrame, perms: &[Vec<usize>], lambda: f64) -> (f64, usize) {
    let tracks = pred.tracks();
    // Pairwise track costs, then sum per permutation.
    let costs: Vec<f64> =
        (0..tracks * tracks).map(|i| track_loss(pred, target, i / tracks, i % tracks, lambda)).collect();
    let mut best = (f64::INFINITY, 0);
    for (pi, perm) in perms.iter().enumerate() {
        let l: f64 = perm.iter().enumerate().map(|(m, &a)| costs[m * tracks + a]).sum();
        if l < best.0 {
            best = (l, pi);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitResult {
    /// Mean over frames of the per-frame minimum.
    pub loss: f64,
    /// Chosen assignment for each frame.
    pub perms: Vec<Vec<usize>>,
    pub frame_losses: Vec<f64>,
}

fn check_pair(pred: &[TrackwiseFrame], target: &[TrackwiseFrame]) -> Result<usize> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predicted frames vs {} target frames", pred.len(), target.len())));
    }
    let Some(first) = pred.first() else { return Ok(0) };
    if pred.iter().chain(target).any(|f| !f.same_shape(first)) {
        return Err(Error::Shape("prediction and target frames differ in shape".into()));
    }
    if first.tracks() > MAX_TRACKS {
        return Err(Error::UnsupportedTracks(first.tracks()));
    }
    Ok(first.tracks())
}

pub fn pit_loss(pred: &[TrackwiseFrame], target: &[TrackwiseFrame], cfg: &LossConfig) -> Result<PitResult> {
    cfg.validate()?;
    let tracks = check_pair(pred, target)?;
    if pred.is_empty() {
        return Ok(PitResult { loss: 0.0, perms: Vec::new(), frame_losses: Vec::new() });
    }
    let perms = permutations(tracks);
    let mut chosen = Vec::with_capacity(pred.len());
    let mut frame_losses = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let (l, pi) = best_permutation(p, t, &perms, cfg.lambda);
        frame_losses.push(l);
        chosen.push(perms[pi].clone());
    }
    let loss = frame_losses.iter().sum::<f64>() / pred.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("PIT loss {loss}")));
    }
    Ok(PitResult { loss, perms: chosen, frame_losses })
}

/// Gradient of the mean PIT loss with respect to predicted probabilities
/// and directions, holding each frame's chosen assignment fixed. Returns one
/// frame of gradients per input frame (same layout as the predictions).
pub fn pit_gradients(
    pred: &[TrackwiseFrame],
    target: &[TrackwiseFrame],
    perms: &[Vec<usize>],
    cfg: &LossConfig,
) -> Vec<TrackwiseFrame> {
    let scale = 1.0 / pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .zip(perms)
        .map(|((p, t), perm)| {
            let mut g = TrackwiseFrame::zeros(p.tracks(), p.classes());
            let k = p.classes() as f64;
            for (m, &a) in perm.iter().enumerate() {
                for (gv, (&pv, &yv)) in g.sed_row_mut(m).iter_mut().zip(p.sed_row(m).iter().zip(t.sed_row(a))) {
                    *gv = scale * cfg.lambda * bce_grad(pv, yv) / k;
                }
                let (d, y) = (p.doa_row(m), t.doa_row(a));
                g.set_doa(m, std::array::from_fn(|j| scale * (1.0 - cfg.lambda) * 2.0 * (d[j] - y[j]) / 3.0));
            }
            g
        })
        .collect()
}
