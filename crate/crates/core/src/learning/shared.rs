//! Pieces shared by the single-model and ensemble networks: soft-sharing
//! couplers, track-wise output heads, and the PIT objective over a model.

use rand::Rng;
use rayon::prelude::*;

use super::layers::{sigmoid, Linear};
use super::params::{Init, ParamId, ParamSet};
use super::pit::{pit_gradients, pit_loss, LossConfig};
use crate::error::{Error, Result};
use crate::track::TrackwiseFrame;

/// Learned scalar gates blending activations between the detection and
/// localization branches:
/// `sed' = sed + g_sd·doa`, `doa' = doa + g_ds·sed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupler {
    /// Gate on the path into the detection branch.
    pub sed_from_doa: ParamId,
    /// Gate on the path into the localization branch.
    pub doa_from_sed: ParamId,
}

impl Coupler {
    pub fn new(ps: &mut ParamSet, name: &str, init: f64, rng: &mut impl Rng) -> Self {
        Coupler {
            sed_from_doa: ps.add(format!("{name}.sed_from_doa"), &[1], Init::Constant(init), rng),
            doa_from_sed: ps.add(format!("{name}.doa_from_sed"), &[1], Init::Constant(init), rng),
        }
    }

    pub fn forward(&self, ps: &ParamSet, sed: &[f64], doa: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (g_sd, g_ds) = (ps.get(self.sed_from_doa)[0], ps.get(self.doa_from_sed)[0]);
        let s = sed.iter().zip(doa).map(|(a, b)| a + g_sd * b).collect();
        let d = doa.iter().zip(sed).map(|(a, b)| a + g_ds * b).collect();
        (s, d)
    }

    /// Returns gradients for the two branch inputs.
    pub fn backward(
        &self,
        ps: &ParamSet,
        sed: &[f64],
        doa: &[f64],
        d_sed: &[f64],
        d_doa: &[f64],
        grads: &mut ParamSet,
    ) -> (Vec<f64>, Vec<f64>) {
        let (g_sd, g_ds) = (ps.get(self.sed_from_doa)[0], ps.get(self.doa_from_sed)[0]);
        grads.get_mut(self.sed_from_doa)[0] += d_sed.iter().zip(doa).map(|(a, b)| a * b).sum::<f64>();
        grads.get_mut(self.doa_from_sed)[0] += d_doa.iter().zip(sed).map(|(a, b)| a * b).sum::<f64>();
        let ds = d_sed.iter().zip(d_doa).map(|(a, b)| a + g_ds * b).collect();
        let dd = d_doa.iter().zip(d_sed).map(|(a, b)| a + g_sd * b).collect();
        (ds, dd)
    }
}

/// Per-track linear heads: sigmoid class activations from the detection
/// branch, tanh directions from the localization branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHeads {
    pub sed: Vec<Linear>,
    pub doa: Vec<Linear>,
    pub classes: usize,
}

impl TrackHeads {
    pub fn new(ps: &mut ParamSet, in_dim: usize, tracks: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let sed = (0..tracks).map(|m| Linear::new(ps, &format!("head.sed.{m}"), in_dim, classes, rng)).collect();
        let doa = (0..tracks).map(|m| Linear::new(ps, &format!("head.doa.{m}"), in_dim, 3, rng)).collect();
        TrackHeads { sed, doa, classes }
    }

    pub fn forward(&self, ps: &ParamSet, sed_feat: &[f64], doa_feat: &[f64]) -> Vec<TrackwiseFrame> {
        let tracks = self.sed.len();
        let frames = sed_feat.len() / self.sed[0].in_dim;
        let mut out = vec![TrackwiseFrame::zeros(tracks, self.classes); frames];
        for m in 0..tracks {
            let s = self.sed[m].forward(ps, sed_feat);
            let d = self.doa[m].forward(ps, doa_feat);
            for (t, frame) in out.iter_mut().enumerate() {
                for (o, &v) in frame.sed_row_mut(m).iter_mut().zip(&s[t * self.classes..(t + 1) * self.classes]) {
                    *o = sigmoid(v);
                }
                frame.set_doa(m, std::array::from_fn(|j| d[t * 3 + j].tanh()));
            }
        }
        out
    }

    /// Back-propagates output gradients (in probability/direction space)
    /// through the activations and heads.
    pub fn backward(
        &self,
        ps: &ParamSet,
        sed_feat: &[f64],
        doa_feat: &[f64],
        out: &[TrackwiseFrame],
        dout: &[TrackwiseFrame],
        grads: &mut ParamSet,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut d_sed = vec![0.0; sed_feat.len()];
        let mut d_doa = vec![0.0; doa_feat.len()];
        for m in 0..self.sed.len() {
            let mut gs = Vec::with_capacity(out.len() * self.classes);
            let mut gd = Vec::with_capacity(out.len() * 3);
            for (o, g) in out.iter().zip(dout) {
                gs.extend(o.sed_row(m).iter().zip(g.sed_row(m)).map(|(&p, &gp)| gp * p * (1.0 - p)));
                let (y, gy) = (o.doa_row(m), g.doa_row(m));
                gd.extend((0..3).map(|j| gy[j] * (1.0 - y[j] * y[j])));
            }
            for (a, b) in d_sed.iter_mut().zip(self.sed[m].backward(ps, sed_feat, &gs, grads)) {
                *a += b;
            }
            for (a, b) in d_doa.iter_mut().zip(self.doa[m].backward(ps, doa_feat, &gd, grads)) {
                *a += b;
            }
        }
        (d_sed, d_doa)
    }
}

/// A network emitting track-wise frames, trainable under the PIT objective.
pub trait TrackwiseModel: Sync {
    type Input: Sync;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn predict(&self, input: &Self::Input) -> Result<Vec<TrackwiseFrame>>;
    /// Back-propagates output-space gradients into parameter gradients.
    fn backward(&self, input: &Self::Input, output_grads: &[TrackwiseFrame]) -> Result<ParamSet>;

    /// One forward pass whose output is handed to `output_grads`, then
    /// back-propagation of the gradients it returns. Implementations may
    /// reuse the forward activations.
    fn forward_backward(
        &self,
        input: &Self::Input,
        output_grads: &mut dyn FnMut(&[TrackwiseFrame]) -> Result<Vec<TrackwiseFrame>>,
    ) -> Result<ParamSet> {
        let dout = output_grads(&self.predict(input)?)?;
        self.backward(input, &dout)
    }

    /// Mean PIT loss of one example and its parameter gradient. Predictions
    /// beyond the target length (or vice versa) are ignored.
    fn loss_and_grad(&self, input: &Self::Input, target: &[TrackwiseFrame], cfg: &LossConfig) -> Result<(f64, ParamSet)> {
        let mut loss = 0.0;
        let grads = self.forward_backward(input, &mut |pred| {
            let n = pred.len().min(target.len());
            let pit = pit_loss(&pred[..n], &target[..n], cfg)?;
            let mut dout = pit_gradients(&pred[..n], &target[..n], &pit.perms, cfg);
            if let Some(first) = pred.first() {
                dout.resize(pred.len(), TrackwiseFrame::zeros(first.tracks(), first.classes()));
            }
            loss = pit.loss;
            Ok(dout)
        })?;
        Ok((loss, grads))
    }
}

/// Mean loss and gradient over a batch of examples. Examples run in
/// parallel; their gradients are summed in input order.
pub fn batch_gradients<M: TrackwiseModel>(
    model: &M,
    batch: &[(&M::Input, &[TrackwiseFrame])],
    cfg: &LossConfig,
) -> Result<(f64, ParamSet)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let parts: Vec<(f64, ParamSet)> =
        batch.par_iter().map(|(x, y)| model.loss_and_grad(x, y, cfg)).collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = model.params().zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l * scale;
        total.add_scaled(g, scale);
    }
    if !loss.is_finite() || !total.all_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss} or its gradient")));
    }
    Ok((loss, total))
}
