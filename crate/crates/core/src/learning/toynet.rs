//! A small two-branch track-wise network.
//!
//! Each branch (detection, localization) runs two 3×3 convolution blocks with
//! 2×2 average pooling, then a temporal convolution over flattened
//! channel × frequency frames. Learned scalar couplers exchange activations
//! between the branches after every stage, and per-track heads emit class
//! probabilities and directions. With `dense` set, each block is a two-layer
//! dense block whose second layer also sees the block input.

use serde::{Deserialize, Serialize};

use super::layers::{avg_pool2, avg_pool2_backward, from_frames, relu, relu_backward, to_frames, Conv2d, TimeConv};
use super::params::ParamSet;
use super::shared::{Coupler, TrackHeads, TrackwiseModel};
use crate::error::{Error, Result};
use crate::features::{FeatureScaler, FeatureTensor};
use crate::seed;
use crate::track::{TrackwiseFrame, DEFAULT_CLASSES, DEFAULT_TRACKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyNetConfig {
    pub input_channels: usize,
    pub input_bins: usize,
    pub conv_channels: [usize; 2],
    pub dense: bool,
    pub hidden: usize,
    pub tracks: usize,
    pub classes: usize,
    pub gate_init: f64,
    pub seed: u64,
    /// Standardization applied to every input.
    pub scaler: Option<FeatureScaler>,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            input_channels: 14,
            input_bins: 128,
            conv_channels: [8, 16],
            dense: false,
            hidden: 32,
            tracks: DEFAULT_TRACKS,
            classes: DEFAULT_CLASSES,
            gate_init: 0.1,
            seed: 0,
            scaler: None,
        }
    }
}

impl ToyNetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.input_channels, self.conv_channels[0], self.conv_channels[1], self.hidden, self.tracks, self.classes];
        if positive.contains(&0) || self.input_bins < 4 {
            return Err(Error::Config("network widths must be positive and input_bins >= 4".into()));
        }
        if self.dense && self.conv_channels.iter().any(|c| c % 2 != 0) {
            return Err(Error::Config("dense blocks need even channel widths".into()));
        }
        if let Some(s) = &self.scaler {
            s.validate(self.input_channels)?;
        }
        Ok(())
    }

    fn flat_dim(&self) -> usize {
        self.conv_channels[1] * (self.input_bins / 4)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBlock {
    layers: Vec<Conv2d>,
    in_ch: usize,
}

struct BlockTrace {
    /// ReLU outputs of each layer.
    acts: Vec<Vec<f64>>,
    /// Input of the second layer in a dense block.
    dense_in: Option<Vec<f64>>,
}

impl ConvBlock {
    fn new(ps: &mut ParamSet, name: &str, in_ch: usize, out_ch: usize, dense: bool, rng: &mut impl rand::Rng) -> Self {
        let layers = if dense {
            let g = out_ch / 2;
            vec![Conv2d::new(ps, &format!("{name}.0"), in_ch, g, rng), Conv2d::new(ps, &format!("{name}.1"), in_ch + g, g, rng)]
        } else {
            vec![Conv2d::new(ps, &format!("{name}.0"), in_ch, out_ch, rng)]
        };
        ConvBlock { layers, in_ch }
    }

    fn forward(&self, ps: &ParamSet, x: &[f64], rows: usize, cols: usize) -> (Vec<f64>, BlockTrace) {
        let mut a0 = self.layers[0].forward(ps, x, rows, cols);
        relu(&mut a0);
        if self.layers.len() == 1 {
            return (a0.clone(), BlockTrace { acts: vec![a0], dense_in: None });
        }
        let mut cat = x.to_vec();
        cat.extend_from_slice(&a0);
        let mut a1 = self.layers[1].forward(ps, &cat, rows, cols);
        relu(&mut a1);
        let mut out = a0.clone();
        out.extend_from_slice(&a1);
        (out, BlockTrace { acts: vec![a0, a1], dense_in: Some(cat) })
    }

    fn backward(&self, ps: &ParamSet, x: &[f64], rows: usize, cols: usize, trace: &BlockTrace, dout: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        if self.layers.len() == 1 {
            let mut g = dout.to_vec();
            relu_backward(&trace.acts[0], &mut g);
            return self.layers[0].backward(ps, x, rows, cols, &g, grads);
        }
        let split = trace.acts[0].len();
        let mut g1 = dout[split..].to_vec();
        relu_backward(&trace.acts[1], &mut g1);
        let dcat = self.layers[1].backward(ps, trace.dense_in.as_ref().unwrap(), rows, cols, &g1, grads);
        let n_in = self.in_ch * rows * cols;
        let mut g0: Vec<f64> = dout[..split].iter().zip(&dcat[n_in..]).map(|(a, b)| a + b).collect();
        relu_backward(&trace.acts[0], &mut g0);
        let dx = self.layers[0].backward(ps, x, rows, cols, &g0, grads);
        dx.iter().zip(&dcat[..n_in]).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Branch {
    block1: ConvBlock,
    block2: ConvBlock,
    mix: TimeConv,
}

#[derive(Debug, Clone)]
pub struct ToyNet {
    pub config: ToyNetConfig,
    pub params: ParamSet,
    branches: [Branch; 2],
    couplers: [Coupler; 3],
    heads: TrackHeads,
}

/// Everything the backward pass needs from one forward pass.
pub struct ToyTrace {
    dims: (usize, usize),
    scaled: Option<Vec<f64>>,
    block1: [BlockTrace; 2],
    pooled1: [Vec<f64>; 2],
    coupled1: [Vec<f64>; 2],
    block2: [BlockTrace; 2],
    pooled2: [Vec<f64>; 2],
    flat: [Vec<f64>; 2],
    mixed: [Vec<f64>; 2],
    coupled3: [Vec<f64>; 2],
    out: Vec<TrackwiseFrame>,
}

const BRANCH_NAMES: [&str; 2] = ["sed", "doa"];

impl ToyNet {
    pub fn new(config: ToyNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let mut ps = ParamSet::default();
        let [c1, c2] = config.conv_channels;
        let branches = BRANCH_NAMES.map(|b| Branch {
            block1: ConvBlock::new(&mut ps, &format!("{b}.block1"), config.input_channels, c1, config.dense, &mut rng),
            block2: ConvBlock::new(&mut ps, &format!("{b}.block2"), c1, c2, config.dense, &mut rng),
            mix: TimeConv::new(&mut ps, &format!("{b}.mix"), config.flat_dim(), config.hidden, &mut rng),
        });
        let couplers = [1, 2, 3].map(|s| Coupler::new(&mut ps, &format!("couple{s}"), config.gate_init, &mut rng));
        let heads = TrackHeads::new(&mut ps, config.hidden, config.tracks, config.classes, &mut rng);
        Ok(ToyNet { config, params: ps, branches, couplers, heads })
    }

    /// Rebuilds the architecture for `config` and installs `params`.
    pub fn with_params(config: ToyNetConfig, params: ParamSet) -> Result<Self> {
        let mut net = ToyNet::new(config)?;
        if !net.params.same_layout(&params) {
            return Err(Error::Shape("parameter set does not match the architecture".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Output frames for an input of `frames` frames.
    pub fn output_frames(frames: usize) -> usize {
        frames / 4
    }

    fn check_input(&self, x: &FeatureTensor) -> Result<()> {
        if x.channels != self.config.input_channels || x.bins != self.config.input_bins {
            return Err(Error::Shape(format!(
                "network expects {}×T×{} input, got {}×{}×{}",
                self.config.input_channels, self.config.input_bins, x.channels, x.frames, x.bins
            )));
        }
        if x.frames < 4 {
            return Err(Error::Shape(format!("need at least 4 input frames, got {}", x.frames)));
        }
        Ok(())
    }

    pub fn forward_traced(&self, x: &FeatureTensor) -> Result<ToyTrace> {
        self.check_input(x)?;
        let scaled = self.config.scaler.as_ref().map(|s| s.apply(x)).transpose()?.map(|t| t.data);
        let input = scaled.as_deref().unwrap_or(&x.data);
        let ps = &self.params;
        let (t, f) = (x.frames, x.bins);
        let (t2, f2, t4, f4) = (t / 2, f / 2, t / 4, f / 4);
        let [c1, c2] = self.config.conv_channels;

        let b1 = [0, 1].map(|b| self.branches[b].block1.forward(ps, input, t, f));
        let pooled1 = [0, 1].map(|b| avg_pool2(&b1[b].0, c1, t, f));
        let (s1, d1) = self.couplers[0].forward(ps, &pooled1[0], &pooled1[1]);
        let coupled1 = [s1, d1];
        let b2 = [0, 1].map(|b| self.branches[b].block2.forward(ps, &coupled1[b], t2, f2));
        let pooled2 = [0, 1].map(|b| avg_pool2(&b2[b].0, c2, t2, f2));
        let (s2, d2) = self.couplers[1].forward(ps, &pooled2[0], &pooled2[1]);
        let flat = [s2, d2].map(|p| to_frames(&p, c2, t4, f4));
        let mixed = [0, 1].map(|b| {
            let mut h = self.branches[b].mix.forward(ps, &flat[b]);
            h.iter_mut().for_each(|v| *v = v.tanh());
            h
        });
        let (s3, d3) = self.couplers[2].forward(ps, &mixed[0], &mixed[1]);
        let coupled3 = [s3, d3];
        let out = self.heads.forward(ps, &coupled3[0], &coupled3[1]);
        let [(_, t1a), (_, t1b)] = b1;
        let [(_, t2a), (_, t2b)] = b2;
        Ok(ToyTrace {
            dims: (t, f),
            scaled,
            block1: [t1a, t1b],
            pooled1,
            coupled1,
            block2: [t2a, t2b],
            pooled2,
            flat,
            mixed,
            coupled3,
            out,
        })
    }

    pub fn backward_traced(&self, x: &FeatureTensor, trace: &ToyTrace, dout: &[TrackwiseFrame]) -> ParamSet {
        let ps = &self.params;
        let mut grads = ps.zeros_like();
        let (t, f) = trace.dims;
        let (t2, f2, t4, f4) = (t / 2, f / 2, t / 4, f / 4);
        let [c1, c2] = self.config.conv_channels;

        let (ds3, dd3) = self.heads.backward(ps, &trace.coupled3[0], &trace.coupled3[1], &trace.out, dout, &mut grads);
        let (dm_s, dm_d) =
            self.couplers[2].backward(ps, &trace.mixed[0], &trace.mixed[1], &ds3, &dd3, &mut grads);
        let dflat = [(0, dm_s), (1, dm_d)].map(|(b, mut g)| {
            for (gv, &h) in g.iter_mut().zip(&trace.mixed[b]) {
                *gv *= 1.0 - h * h;
            }
            self.branches[b].mix.backward(ps, &trace.flat[b], &g, &mut grads)
        });
        let [dfs, dfd] = dflat.map(|g| from_frames(&g, c2, t4, f4));
        let (dp2s, dp2d) = self.couplers[1].backward(ps, &trace.pooled2[0], &trace.pooled2[1], &dfs, &dfd, &mut grads);
        let dc1 = [(0, dp2s), (1, dp2d)].map(|(b, g)| {
            let dact = avg_pool2_backward(&g, c2, t2, f2);
            self.branches[b].block2.backward(ps, &trace.coupled1[b], t2, f2, &trace.block2[b], &dact, &mut grads)
        });
        let [dc1s, dc1d] = dc1;
        let (dp1s, dp1d) = self.couplers[0].backward(ps, &trace.pooled1[0], &trace.pooled1[1], &dc1s, &dc1d, &mut grads);
        for (b, g) in [(0, dp1s), (1, dp1d)] {
            let dact = avg_pool2_backward(&g, c1, t, f);
            let input = trace.scaled.as_deref().unwrap_or(&x.data);
            self.branches[b].block1.backward(ps, input, t, f, &trace.block1[b], &dact, &mut grads);
        }
        grads
    }
}

impl TrackwiseModel for ToyNet {
    type Input = FeatureTensor;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn predict(&self, input: &FeatureTensor) -> Result<Vec<TrackwiseFrame>> {
        Ok(self.forward_traced(input)?.out)
    }

    fn backward(&self, input: &FeatureTensor, output_grads: &[TrackwiseFrame]) -> Result<ParamSet> {
        self.forward_backward(input, &mut |_| Ok(output_grads.to_vec()))
    }

    fn forward_backward(
        &self,
        input: &FeatureTensor,
        output_grads: &mut dyn FnMut(&[TrackwiseFrame]) -> Result<Vec<TrackwiseFrame>>,
    ) -> Result<ParamSet> {
        let trace = self.forward_traced(input)?;
        let dout = output_grads(&trace.out)?;
        if dout.len() != trace.out.len() {
            return Err(Error::Shape("output gradient length mismatch".into()));
        }
        Ok(self.backward_traced(input, &trace, &dout))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;
    use crate::learning::pit::{pit_loss, LossConfig};
    use rand::Rng;

    fn small_config(dense: bool) -> ToyNetConfig {
        ToyNetConfig { input_channels: 7, input_bins: 8, conv_channels: [4, 4], dense, hidden: 6, tracks: 3, classes: 5, gate_init: 0.3, seed: 1, scaler: None }
    }

    fn random_input(frames: usize, bins: usize, seed: u64) -> FeatureTensor {
        let mut rng = seed::rng(seed);
        let n = 7 * frames * bins;
        FeatureTensor::new(FeatureLayout::LogmelIv, frames, bins, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_input_gives_neutral_outputs() {
        let net = ToyNet::new(small_config(false)).unwrap();
        let x = FeatureTensor::zeros(FeatureLayout::LogmelIv, 12, 8);
        let out = net.predict(&x).unwrap();
        assert_eq!(out.len(), 3);
        for f in &out {
            assert!(f.sed.iter().all(|&p| p == 0.5));
            assert!(f.doa.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn frame_count_is_quarter_rounded_down() {
        let net = ToyNet::new(small_config(true)).unwrap();
        for frames in [4, 7, 13, 16] {
            assert_eq!(net.predict(&random_input(frames, 8, 2)).unwrap().len(), frames / 4);
        }
    }

    #[test]
    fn default_widths_stay_small() {
        let net = ToyNet::new(ToyNetConfig::default()).unwrap();
        assert!(net.parameter_count() < 200_000, "{}", net.parameter_count());
        let dense = ToyNet::new(ToyNetConfig { dense: true, ..ToyNetConfig::default() }).unwrap();
        assert!(dense.parameter_count() < 200_000);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = ToyNet::new(small_config(false)).unwrap();
        assert!(net.predict(&random_input(8, 6, 1)).is_err());
        assert!(net.predict(&random_input(3, 8, 1)).is_err());
    }

    #[test]
    fn closed_gates_isolate_detection_branch() {
        let mut net = ToyNet::new(small_config(false)).unwrap();
        for s in 1..=3 {
            let id = net.params.find(&format!("couple{s}.sed_from_doa")).unwrap();
            net.params.get_mut(id)[0] = 0.0;
        }
        let x = random_input(12, 8, 5);
        let before = net.predict(&x).unwrap();
        let mut rng = seed::rng(9);
        for t in &mut net.params.tensors {
            if t.name.starts_with("doa.") || t.name.starts_with("head.doa") {
                t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            }
        }
        let after = net.predict(&x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.sed, b.sed);
        }
        assert_ne!(before[0].doa, after[0].doa);
    }

    fn random_target(frames: usize, seed: u64) -> Vec<TrackwiseFrame> {
        let mut rng = seed::rng(seed);
        (0..frames)
            .map(|_| {
                let mut f = TrackwiseFrame::zeros(3, 5);
                for m in 0..3 {
                    if rng.random_bool(0.6) {
                        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                        f.set_event(m, rng.random_range(0..5), [v[0] / n, v[1] / n, v[2] / n]);
                    }
                }
                f
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = LossConfig::default();
        for dense in [false, true] {
            let mut net = ToyNet::new(small_config(dense)).unwrap();
            let mut rng = seed::rng(11);
            for t in &mut net.params.tensors {
                if t.name.ends_with("bias") {
                    t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
                }
            }
            let x = random_input(12, 8, 3);
            let y = random_target(3, 4);
            let (_, grads) = net.loss_and_grad(&x, &y, &cfg).unwrap();
            let h = 1e-5;
            for (ti, t) in net.params.tensors.clone().iter().enumerate() {
                for i in (0..t.data.len()).step_by(7.max(t.data.len() / 5)) {
                    let orig = t.data[i];
                    net.params.tensors[ti].data[i] = orig + h;
                    let up = pit_loss(&net.predict(&x).unwrap(), &y, &cfg).unwrap().loss;
                    net.params.tensors[ti].data[i] = orig - h;
                    let down = pit_loss(&net.predict(&x).unwrap(), &y, &cfg).unwrap().loss;
                    net.params.tensors[ti].data[i] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.tensors[ti].data[i];
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{}[{i}] dense={dense}: {analytic} vs {numeric}", t.name);
                }
            }
        }
    }

    #[test]
    fn closed_gates_block_gradient_into_localization_branch() {
        let mut net = ToyNet::new(small_config(true)).unwrap();
        for s in 1..=3 {
            let id = net.params.find(&format!("couple{s}.sed_from_doa")).unwrap();
            net.params.get_mut(id)[0] = 0.0;
        }
        let x = random_input(12, 8, 8);
        let y = random_target(3, 9);
        let (_, grads) = net.loss_and_grad(&x, &y, &LossConfig { lambda: 1.0 }).unwrap();
        for t in &grads.tensors {
            if t.name.starts_with("doa.") || t.name.starts_with("head.doa") {
                assert!(t.data.iter().all(|&g| g == 0.0), "{}", t.name);
            }
        }
    }
}
