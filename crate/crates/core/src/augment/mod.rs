//! Feature and waveform augmentation.
//!
//! Rotation and cross-sample Mixup change the labels, so they run as
//! stand-alone pre-transforms. The chain sampler mixes only label-preserving
//! masking ops: `k` random chains are blended with Dirichlet weights, and
//! the blend is mixed with the clean input by a Beta-distributed skip weight.

pub mod masks;
pub mod mixup;
pub mod rotation;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTensor;

pub use masks::{cutout, spec_augment};
pub use mixup::{mix_labels, mixup, Mixable};
pub use rotation::{rotate_foa, rotate_labels, rotation_group, RotationElement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugOp {
    Mixup { alpha: f64 },
    SpecAugment { n_time_stripes: usize, n_freq_stripes: usize, max_time_width: usize, max_freq_width: usize },
    Cutout { n_rects: usize, max_h: usize, max_w: usize },
    Rotation { index: usize },
}

impl AugOp {
    pub fn preserves_labels(&self) -> bool {
        matches!(self, AugOp::SpecAugment { .. } | AugOp::Cutout { .. })
    }

    /// Applies a label-preserving op to a feature tensor.
    pub fn apply(&self, feat: &FeatureTensor, rng: &mut impl Rng) -> Result<FeatureTensor> {
        match *self {
            AugOp::SpecAugment { n_time_stripes, n_freq_stripes, max_time_width, max_freq_width } => {
                spec_augment(feat, n_time_stripes, n_freq_stripes, max_time_width, max_freq_width, rng)
            }
            AugOp::Cutout { n_rects, max_h, max_w } => cutout(feat, n_rects, max_h, max_w, rng),
            AugOp::Mixup { .. } | AugOp::Rotation { .. } => Err(Error::Config(format!(
                "{self:?} alters labels and cannot run inside a feature chain"
            ))),
        }
    }
}

fn check_pool(pool: &[AugOp]) -> Result<()> {
    if let Some(op) = pool.iter().find(|op| !op.preserves_labels()) {
        return Err(Error::Config(format!("{op:?} alters labels and is not allowed in the chain pool")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub k: usize,
    pub dirichlet_alpha: f64,
    pub skip_beta_alpha: f64,
    pub max_chain_len: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { k: 3, dirichlet_alpha: 1.0, skip_beta_alpha: 1.0, max_chain_len: 3 }
    }
}

/// `k` sampled chains with their mixing weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugChainSet {
    pub chains: Vec<Vec<AugOp>>,
    /// Dirichlet weights over chains.
    pub weights: Vec<f64>,
    /// Weight kept on the clean input.
    pub skip: f64,
}

impl AugChainSet {
    pub fn sample(pool: &[AugOp], cfg: &ChainConfig, rng: &mut impl Rng) -> Result<Self> {
        check_pool(pool)?;
        if pool.is_empty() || cfg.k == 0 || cfg.max_chain_len == 0 {
            return Err(Error::Config("chain sampling needs a nonempty pool, k >= 1 and chain length >= 1".into()));
        }
        let bad_alpha = |a: f64| !(a.is_finite() && a > 0.0);
        if bad_alpha(cfg.dirichlet_alpha) || bad_alpha(cfg.skip_beta_alpha) {
            return Err(Error::Config("chain mixing parameters must be positive".into()));
        }
        let chains = (0..cfg.k)
            .map(|_| {
                let len = rng.random_range(1..=cfg.max_chain_len);
                (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
            })
            .collect();
        let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
        let raw: Vec<f64> = (0..cfg.k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let beta = Beta::new(cfg.skip_beta_alpha, cfg.skip_beta_alpha).map_err(|e| Error::Config(e.to_string()))?;
        Ok(AugChainSet { chains, weights, skip: beta.sample(rng) })
    }

    /// `skip·x + (1−skip)·Σᵢ wᵢ·chainᵢ(x)`.
    pub fn apply(&self, feat: &FeatureTensor, rng: &mut impl Rng) -> Result<FeatureTensor> {
        if self.chains.len() != self.weights.len() {
            return Err(Error::Config("one weight per chain required".into()));
        }
        let mut out = feat.clone();
        out.data.iter_mut().for_each(|v| *v *= self.skip);
        for (chain, &w) in self.chains.iter().zip(&self.weights) {
            check_pool(chain)?;
            let branch = serial_compose(feat, chain, rng)?;
            let scale = (1.0 - self.skip) * w;
            for (o, b) in out.data.iter_mut().zip(&branch.data) {
                *o += scale * b;
            }
        }
        Ok(out)
    }
}

/// Samples `cfg.k` chains from `pool` and mixes them with the input.
pub fn augmix_compose(feat: &FeatureTensor, pool: &[AugOp], cfg: &ChainConfig, rng: &mut impl Rng) -> Result<FeatureTensor> {
    let set = AugChainSet::sample(pool, cfg, rng)?;
    set.apply(feat, rng)
}

/// Applies `ops` one after another without mixing.
pub fn serial_compose(feat: &FeatureTensor, ops: &[AugOp], rng: &mut impl Rng) -> Result<FeatureTensor> {
    ops.iter().try_fold(feat.clone(), |acc, op| op.apply(&acc, rng))
}

/// How feature-level augmentation is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    None,
    Serial,
    #[default]
    Chains,
}

/// Augmentation policy file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugPolicy {
    pub seed: u64,
    pub composition: Composition,
    pub pool: Vec<AugOp>,
    pub chains: ChainConfig,
    /// Rotate each clip by a random group element before feature extraction.
    pub rotation: bool,
    /// Mix each clip's waveform with a random partner before extraction.
    pub waveform_mixup: bool,
    pub mixup_alpha: f64,
    /// Partner draws before a clip is left unmixed.
    pub mixup_retries: usize,
}

impl Default for AugPolicy {
    fn default() -> Self {
        AugPolicy {
            seed: 0,
            composition: Composition::Chains,
            pool: vec![
                AugOp::SpecAugment { n_time_stripes: 2, n_freq_stripes: 2, max_time_width: 8, max_freq_width: 8 },
                AugOp::Cutout { n_rects: 2, max_h: 16, max_w: 16 },
            ],
            chains: ChainConfig::default(),
            rotation: true,
            waveform_mixup: false,
            mixup_alpha: 0.5,
            mixup_retries: 8,
        }
    }
}

impl AugPolicy {
    pub fn validate(&self) -> Result<()> {
        check_pool(&self.pool)?;
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return Err(Error::Config(format!("mixup_alpha must be positive, got {}", self.mixup_alpha)));
        }
        Ok(())
    }

    /// Feature-level part of the policy.
    pub fn apply_features(&self, feat: &FeatureTensor, rng: &mut impl Rng) -> Result<FeatureTensor> {
        match self.composition {
            Composition::None => Ok(feat.clone()),
            Composition::Serial => serial_compose(feat, &self.pool, rng),
            Composition::Chains => augmix_compose(feat, &self.pool, &self.chains, rng),
        }
    }

    pub fn sample_lambda(&self, rng: &mut impl Rng) -> Result<f64> {
        let beta = Beta::new(self.mixup_alpha, self.mixup_alpha).map_err(|e| Error::Config(e.to_string()))?;
        Ok(beta.sample(rng))
    }
}
