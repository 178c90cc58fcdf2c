//! Log-linear spectrograms with normalized principal eigenvectors of the
//! local spatial covariance matrix.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_foa, log_power, ComplexSpectrogram, FeatureLayout, FeatureTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalsaConfig {
    pub window_size: usize,
    pub hop_size: usize,
    /// Covariance averaging neighbourhood in frames (odd).
    pub time_context: usize,
    /// Covariance averaging neighbourhood in bins (odd).
    pub freq_context: usize,
    /// Eigenvector ratios are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// Bins whose largest eigenvalue falls below this output zeros.
    pub gate: f64,
}

impl Default for SalsaConfig {
    fn default() -> Self {
        SalsaConfig { window_size: 512, hop_size: 400, time_context: 3, freq_context: 3, clip: 5.0, gate: 1e-8 }
    }
}

/// Largest eigenvalue and its unit eigenvector of a Hermitian matrix.
pub fn principal_eigenpair(c: &Matrix4<Complex64>) -> (f64, Vector4<Complex64>) {
    let eig = c.symmetric_eigen();
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    (lambda, eig.eigenvectors.column(idx).into_owned())
}

/// Direction cue from a principal eigenvector: rotate the phase so the W
/// component is real and nonnegative, then divide the X/Y/Z parts by it.
pub fn eigenvector_cue(v: &Vector4<Complex64>, clip: f64) -> [f64; 3] {
    let mag = v[0].norm();
    let phase = if mag > 0.0 { v[0].conj() / mag } else { Complex64::new(1.0, 0.0) };
    std::array::from_fn(|i| ((v[i + 1] * phase).re / (mag + 1e-8)).clamp(-clip, clip))
}

pub fn salsa(spec: &ComplexSpectrogram, cfg: &SalsaConfig) -> Result<FeatureTensor> {
    check_foa(spec)?;
    if cfg.time_context.is_multiple_of(2) || cfg.freq_context.is_multiple_of(2) {
        return Err(Error::Config("SALSA neighbourhood sizes must be odd".into()));
    }
    let (frames, bins) = (spec.frames, spec.bins);
    let mut out = FeatureTensor::zeros(FeatureLayout::Salsa, frames, bins);
    for c in 0..4 {
        for t in 0..frames {
            for (k, z) in spec.frame(c, t).iter().enumerate() {
                let i = out.index(c, t, k);
                out.data[i] = log_power(z.norm_sqr());
            }
        }
    }
    let (ht, hf) = (cfg.time_context / 2, cfg.freq_context / 2);
    for t in 0..frames {
        let (t0, t1) = (t.saturating_sub(ht), (t + ht + 1).min(frames));
        for k in 0..bins {
            let (k0, k1) = (k.saturating_sub(hf), (k + hf + 1).min(bins));
            let mut cov = Matrix4::<Complex64>::zeros();
            for tt in t0..t1 {
                for kk in k0..k1 {
                    let x: [Complex64; 4] = std::array::from_fn(|ch| spec.at(ch, tt, kk));
                    for i in 0..4 {
                        for j in 0..4 {
                            cov[(i, j)] += x[i] * x[j].conj();
                        }
                    }
                }
            }
            cov /= Complex64::new(((t1 - t0) * (k1 - k0)) as f64, 0.0);
            let (lambda, v) = principal_eigenpair(&cov);
            if lambda < cfg.gate {
                continue;
            }
            for (axis, value) in eigenvector_cue(&v, cfg.clip).into_iter().enumerate() {
                let i = out.index(4 + axis, t, k);
                out.data[i] = value;
            }
        }
    }
    Ok(out)
}
