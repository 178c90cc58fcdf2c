use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, peak-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Row-major `n_mels × n_bins`.
    pub weights: Vec<f64>,
    /// Band edges in Hz: `n_mels + 2` points, filter `m` peaks at `edges[m + 1]`.
    pub edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fmin: f64, fmax: f64, n_bins: usize, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 || n_bins < 2 || !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(Error::Config(format!(
                "mel filterbank needs n_mels >= 1 and 0 <= fmin < fmax <= {nyquist}, got {n_mels}, {fmin}, {fmax}"
            )));
        }
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let mut edges: Vec<f64> =
            (0..n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64)).collect();
        edges[0] = fmin;
        edges[n_mels + 1] = fmax;
        let bin_hz = nyquist / (n_bins - 1) as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            // No FFT bin strictly inside (left, right]: the triangle is empty.
            if (left / bin_hz).floor() == (right / bin_hz).floor() {
                return Err(Error::DegenerateMelBand { lower: m, upper: m + 2 });
            }
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
            }
        }
        Ok(MelFilterbank { n_mels, n_bins, fmin, fmax, weights, edges })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Nonzero span `[first, last)` of each row, for sparse products.
    pub(crate) fn supports(&self) -> Vec<(usize, usize)> {
        (0..self.n_mels)
            .map(|m| {
                let row = self.row(m);
                let first = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w != 0.0).map_or(first, |i| i + 1);
                (first, last)
            })
            .collect()
    }

    /// `out[m] = Σ_k w[m][k] · x[k]`.
    pub(crate) fn project_into(&self, supports: &[(usize, usize)], x: &[f64], out: &mut [f64]) {
        for (m, &(a, b)) in supports.iter().enumerate() {
            out[m] = self.row(m)[a..b].iter().zip(&x[a..b]).map(|(w, v)| w * v).sum();
        }
    }
}
