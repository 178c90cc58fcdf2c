use serde::{Deserialize, Serialize};

use super::EnsembleInput;
use crate::error::{Error, Result};
use crate::learning::layers::{from_frames, relu, relu_backward, to_frames, BiGru, BiGruTrace, Conv2d};
use crate::learning::params::ParamSet;
use crate::learning::shared::{Coupler, TrackHeads, TrackwiseModel};
use crate::seed;
use crate::track::{TrackwiseFrame, DEFAULT_CLASSES, DEFAULT_TRACKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleNetConfig {
    pub models: usize,
    pub tracks: usize,
    pub classes: usize,
    pub conv_channels: usize,
    pub hidden: usize,
    pub gate_init: f64,
    pub seed: u64,
}

impl Default for EnsembleNetConfig {
    fn default() -> Self {
        EnsembleNetConfig {
            models: 3,
            tracks: DEFAULT_TRACKS,
            classes: DEFAULT_CLASSES,
            conv_channels: 32,
            hidden: 16,
            gate_init: 0.1,
            seed: 0,
        }
    }
}

impl EnsembleNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models < 2 {
            return Err(Error::Config("an ensemble needs at least 2 models".into()));
        }
        if [self.tracks, self.classes, self.conv_channels, self.hidden].contains(&0) {
            return Err(Error::Config("ensemble widths must be positive".into()));
        }
        Ok(())
    }

    pub fn row_len(&self) -> usize {
        self.models * self.tracks * (self.classes + 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Branch {
    conv: Conv2d,
    gru: BiGru,
}

/// Two-branch ensemble model: per branch a 3×3 convolution over the
/// (frame, input feature) plane, then a bidirectional GRU over frames, with
/// soft-sharing couplers after each stage and track-wise heads. Frames are
/// not pooled.
#[derive(Debug, Clone)]
pub struct EnsembleNet {
    pub config: EnsembleNetConfig,
    pub params: ParamSet,
    branches: [Branch; 2],
    couplers: [Coupler; 2],
    heads: TrackHeads,
}

struct Trace {
    conv: [Vec<f64>; 2],
    flat: [Vec<f64>; 2],
    gru: [(Vec<f64>, BiGruTrace); 2],
    coupled: [Vec<f64>; 2],
    out: Vec<TrackwiseFrame>,
}

impl EnsembleNet {
    pub fn new(config: EnsembleNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let mut ps = ParamSet::default();
        let c = config.conv_channels;
        let branches = ["sed", "doa"].map(|b| Branch {
            conv: Conv2d::new(&mut ps, &format!("{b}.conv"), 1, c, &mut rng),
            gru: BiGru::new(&mut ps, &format!("{b}.gru"), c * config.row_len(), config.hidden, &mut rng),
        });
        let couplers = [1, 2].map(|s| Coupler::new(&mut ps, &format!("couple{s}"), config.gate_init, &mut rng));
        let heads = TrackHeads::new(&mut ps, 2 * config.hidden, config.tracks, config.classes, &mut rng);
        Ok(EnsembleNet { config, params: ps, branches, couplers, heads })
    }

    pub fn with_params(config: EnsembleNetConfig, params: ParamSet) -> Result<Self> {
        let mut net = EnsembleNet::new(config)?;
        if !net.params.same_layout(&params) {
            return Err(Error::Shape("parameter set does not match the architecture".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    fn check(&self, x: &EnsembleInput) -> Result<()> {
        let c = &self.config;
        if (x.models, x.tracks, x.classes) != (c.models, c.tracks, c.classes) || x.data.len() != x.frames * x.row_len() {
            return Err(Error::Shape(format!(
                "ensemble expects {} models × {} tracks × {} classes, got {} × {} × {}",
                c.models, c.tracks, c.classes, x.models, x.tracks, x.classes
            )));
        }
        if x.frames == 0 {
            return Err(Error::Shape("ensemble input has no frames".into()));
        }
        Ok(())
    }

    fn forward_traced(&self, x: &EnsembleInput) -> Result<Trace> {
        self.check(x)?;
        let ps = &self.params;
        let (t, d, c) = (x.frames, x.row_len(), self.config.conv_channels);
        let conv = [0, 1].map(|b| {
            let mut a = self.branches[b].conv.forward(ps, &x.data, t, d);
            relu(&mut a);
            a
        });
        let (s1, d1) = self.couplers[0].forward(ps, &conv[0], &conv[1]);
        let flat = [s1, d1].map(|v| to_frames(&v, c, t, d));
        let gru = [0, 1].map(|b| self.branches[b].gru.forward(ps, &flat[b]));
        let (s2, d2) = self.couplers[1].forward(ps, &gru[0].0, &gru[1].0);
        let out = self.heads.forward(ps, &s2, &d2);
        Ok(Trace { conv, flat, gru, coupled: [s2, d2], out })
    }
}

impl TrackwiseModel for EnsembleNet {
    type Input = EnsembleInput;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn predict(&self, input: &EnsembleInput) -> Result<Vec<TrackwiseFrame>> {
        Ok(self.forward_traced(input)?.out)
    }

    fn backward(&self, x: &EnsembleInput, dout: &[TrackwiseFrame]) -> Result<ParamSet> {
        self.forward_backward(x, &mut |_| Ok(dout.to_vec()))
    }

    fn forward_backward(
        &self,
        x: &EnsembleInput,
        output_grads: &mut dyn FnMut(&[TrackwiseFrame]) -> Result<Vec<TrackwiseFrame>>,
    ) -> Result<ParamSet> {
        let tr = self.forward_traced(x)?;
        let dout = output_grads(&tr.out)?;
        if dout.len() != tr.out.len() {
            return Err(Error::Shape("output gradient length mismatch".into()));
        }
        let ps = &self.params;
        let mut grads = ps.zeros_like();
        let (t, d, c) = (x.frames, x.row_len(), self.config.conv_channels);
        let (ds2, dd2) = self.heads.backward(ps, &tr.coupled[0], &tr.coupled[1], &tr.out, &dout, &mut grads);
        let (dg_s, dg_d) = self.couplers[1].backward(ps, &tr.gru[0].0, &tr.gru[1].0, &ds2, &dd2, &mut grads);
        let dflat = [(0, dg_s), (1, dg_d)].map(|(b, g)| {
            let df = self.branches[b].gru.backward(ps, &tr.flat[b], &tr.gru[b].1, &g, &mut grads);
            from_frames(&df, c, t, d)
        });
        let [dfs, dfd] = dflat;
        let (dc_s, dc_d) = self.couplers[0].backward(ps, &tr.conv[0], &tr.conv[1], &dfs, &dfd, &mut grads);
        for (b, mut g) in [(0, dc_s), (1, dc_d)] {
            relu_backward(&tr.conv[b], &mut g);
            self.branches[b].conv.backward(ps, &x.data, t, d, &g, &mut grads);
        }
        Ok(grads)
    }
}
