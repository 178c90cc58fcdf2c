//! Spectral and spatial input features for FOA clips.
//!
//! Two feature families are produced per array, each with seven channels:
//! four log-mel spectrograms plus three intensity-vector channels, or four
//! log-linear spectrograms plus three principal-eigenvector channels
//! (SALSA). Features from the two arrays are stacked into fourteen channels.

pub mod io;
pub mod mel;
pub mod salsa;
pub mod stft;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::FoaClip;

pub use mel::MelFilterbank;
pub use salsa::{principal_eigenpair, salsa, SalsaConfig};
pub use stft::{stft, ComplexSpectrogram};

/// Power floor applied before taking logarithms (−100 dB).
pub const LOG_FLOOR: f64 = 1e-10;
/// Value of a silent log channel.
pub const LOG_FLOOR_DB: f64 = -100.0;
/// Stabilizer in the intensity-vector normalization.
pub const IV_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// 4 log-mel channels.
    LogMel,
    /// 3 normalized intensity-vector channels on mel bins.
    IntensityVector,
    /// 4 log-mel + 3 intensity-vector channels.
    LogmelIv,
    /// 4 log-linear + 3 eigenvector channels.
    Salsa,
    /// Two stacked [`FeatureLayout::LogmelIv`] blocks, array A first.
    StackedLogmelIv,
    /// Two stacked [`FeatureLayout::Salsa`] blocks, array A first.
    StackedSalsa,
}

impl FeatureLayout {
    pub fn channels(self) -> usize {
        match self {
            FeatureLayout::LogMel => 4,
            FeatureLayout::IntensityVector => 3,
            FeatureLayout::LogmelIv | FeatureLayout::Salsa => 7,
            FeatureLayout::StackedLogmelIv | FeatureLayout::StackedSalsa => 14,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            FeatureLayout::LogMel => 1,
            FeatureLayout::IntensityVector => 2,
            FeatureLayout::LogmelIv => 3,
            FeatureLayout::Salsa => 4,
            FeatureLayout::StackedLogmelIv => 5,
            FeatureLayout::StackedSalsa => 6,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            1 => FeatureLayout::LogMel,
            2 => FeatureLayout::IntensityVector,
            3 => FeatureLayout::LogmelIv,
            4 => FeatureLayout::Salsa,
            5 => FeatureLayout::StackedLogmelIv,
            6 => FeatureLayout::StackedSalsa,
            _ => return None,
        })
    }

    pub fn stacked(self) -> Option<Self> {
        match self {
            FeatureLayout::LogmelIv => Some(FeatureLayout::StackedLogmelIv),
            FeatureLayout::Salsa => Some(FeatureLayout::StackedSalsa),
            _ => None,
        }
    }

    /// Whether channel `c` holds log power (masked to the log floor) rather
    /// than a spatial cue (masked to zero).
    pub fn is_log_channel(self, c: usize) -> bool {
        match self {
            FeatureLayout::LogMel => true,
            FeatureLayout::IntensityVector => false,
            _ => c % 7 < 4,
        }
    }

    /// The value representing silence in channel `c`.
    pub fn mask_value(self, c: usize) -> f64 {
        if self.is_log_channel(c) {
            LOG_FLOOR_DB
        } else {
            0.0
        }
    }
}

/// Real-valued `channels × frames × bins` tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub layout: FeatureLayout,
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(layout: FeatureLayout, frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        let channels = layout.channels();
        if data.len() != channels * frames * bins {
            return Err(Error::Shape(format!(
                "{layout:?} tensor of {channels}×{frames}×{bins} needs {} values, got {}",
                channels * frames * bins,
                data.len()
            )));
        }
        Ok(FeatureTensor { layout, channels, frames, bins, data })
    }

    pub fn zeros(layout: FeatureLayout, frames: usize, bins: usize) -> Self {
        let channels = layout.channels();
        FeatureTensor { layout, channels, frames, bins, data: vec![0.0; channels * frames * bins] }
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, f: usize) -> usize {
        (c * self.frames + t) * self.bins + f
    }

    pub fn at(&self, c: usize, t: usize, f: usize) -> f64 {
        self.data[self.index(c, t, f)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.frames * self.bins;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layout == other.layout && self.frames == other.frames && self.bins == other.bins
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frames `[start, end)` as a new tensor.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.frames {
            return Err(Error::Shape(format!("frame range {start}..{end} outside {} frames", self.frames)));
        }
        let mut data = Vec::with_capacity(self.channels * (end - start) * self.bins);
        for c in 0..self.channels {
            data.extend_from_slice(&self.data[self.index(c, start, 0)..self.index(c, end, 0)]);
        }
        FeatureTensor::new(self.layout, end - start, self.bins, data)
    }
}

/// Per-channel standardization fitted on a set of tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Mean and standard deviation of every channel over all frames and
    /// bins of `tensors`. Constant channels get unit scale.
    pub fn fit(tensors: &[&FeatureTensor]) -> Result<Self> {
        let first = tensors.first().ok_or_else(|| Error::Shape("no tensors to fit a scaler on".into()))?;
        if tensors.iter().any(|t| t.channels != first.channels) {
            return Err(Error::Shape("tensors disagree on channel count".into()));
        }
        let mut mean = Vec::with_capacity(first.channels);
        let mut std = Vec::with_capacity(first.channels);
        for c in 0..first.channels {
            let n: usize = tensors.iter().map(|t| t.channel(c).len()).sum();
            let m = tensors.iter().flat_map(|t| t.channel(c)).sum::<f64>() / n.max(1) as f64;
            let var = tensors.iter().flat_map(|t| t.channel(c)).map(|v| (v - m) * (v - m)).sum::<f64>() / n.max(1) as f64;
            mean.push(m);
            std.push(if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 });
        }
        Ok(FeatureScaler { mean, std })
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.mean.len() != channels || self.std.len() != channels {
            return Err(Error::Config(format!("scaler has {} channels, input has {channels}", self.mean.len())));
        }
        if self.std.iter().chain(&self.mean).any(|v| !v.is_finite()) || self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("scaler needs finite means and positive deviations".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        self.validate(x.channels)?;
        let mut out = x.clone();
        let n = x.frames * x.bins;
        for (c, chunk) in out.data.chunks_exact_mut(n.max(1)).enumerate().take(x.channels) {
            chunk.iter_mut().for_each(|v| *v = (*v - self.mean[c]) / self.std[c]);
        }
        Ok(out)
    }
}

fn check_foa(spec: &ComplexSpectrogram) -> Result<()> {
    if spec.channels != 4 {
        return Err(Error::Shape(format!("expected 4 FOA channels, got {}", spec.channels)));
    }
    Ok(())
}

fn check_bins(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<()> {
    if spec.bins != fb.n_bins {
        return Err(Error::Shape(format!("filterbank has {} bins, spectrogram {}", fb.n_bins, spec.bins)));
    }
    Ok(())
}

pub fn log_power(p: f64) -> f64 {
    10.0 * p.max(LOG_FLOOR).log10()
}

/// Four log-mel channels: `10·log10(max(|X|² · fbᵀ, floor))`.
pub fn logmel(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<FeatureTensor> {
    check_foa(spec)?;
    check_bins(spec, fb)?;
    let supports = fb.supports();
    let mut out = FeatureTensor::zeros(FeatureLayout::LogMel, spec.frames, fb.n_mels);
    let mut power = vec![0.0; spec.bins];
    let mut mel = vec![0.0; fb.n_mels];
    for c in 0..4 {
        for t in 0..spec.frames {
            for (p, z) in power.iter_mut().zip(spec.frame(c, t)) {
                *p = z.norm_sqr();
            }
            fb.project_into(&supports, &power, &mut mel);
            let base = out.index(c, t, 0);
            for (o, &m) in out.data[base..base + fb.n_mels].iter_mut().zip(&mel) {
                *o = log_power(m);
            }
        }
    }
    Ok(out)
}

/// Un-normalized mel-band intensity `Σ_k w[m][k] · Re(conj(W)·(X, Y, Z))`,
/// laid out `[axis][frame][mel]`.
pub fn mel_intensity(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<Vec<f64>> {
    check_foa(spec)?;
    check_bins(spec, fb)?;
    let supports = fb.supports();
    let mut out = vec![0.0; 3 * spec.frames * fb.n_mels];
    let mut lin = vec![0.0; spec.bins];
    let mut mel = vec![0.0; fb.n_mels];
    for t in 0..spec.frames {
        let w = spec.frame(0, t);
        for axis in 0..3 {
            for ((l, a), b) in lin.iter_mut().zip(w).zip(spec.frame(axis + 1, t)) {
                *l = (a.conj() * b).re;
            }
            fb.project_into(&supports, &lin, &mut mel);
            let base = (axis * spec.frames + t) * fb.n_mels;
            out[base..base + fb.n_mels].copy_from_slice(&mel);
        }
    }
    Ok(out)
}

/// Three intensity-vector channels, normalized per mel TF bin.
pub fn intensity_vector(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<FeatureTensor> {
    let raw = mel_intensity(spec, fb)?;
    let plane = spec.frames * fb.n_mels;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        let v = [raw[i], raw[plane + i], raw[2 * plane + i]];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() + IV_EPSILON;
        for axis in 0..3 {
            data[axis * plane + i] = v[axis] / n;
        }
    }
    FeatureTensor::new(FeatureLayout::IntensityVector, spec.frames, fb.n_mels, data)
}

/// Concatenates tensors along the channel axis.
pub fn concat_channels(layout: FeatureLayout, parts: &[&FeatureTensor]) -> Result<FeatureTensor> {
    let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
    if parts.iter().any(|p| p.frames != first.frames || p.bins != first.bins) {
        return Err(Error::Shape("tensors disagree on frames or bins".into()));
    }
    let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
    FeatureTensor::new(layout, first.frames, first.bins, data)
}

/// Channel-axis concatenation of two single-array tensors, array A first.
pub fn stack_arrays(a: &FeatureTensor, b: &FeatureTensor) -> Result<FeatureTensor> {
    let stacked = a
        .layout
        .stacked()
        .ok_or_else(|| Error::Shape(format!("cannot stack {:?} tensors", a.layout)))?;
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "cannot stack {:?} {}×{} with {:?} {}×{}",
            a.layout, a.frames, a.bins, b.layout, b.frames, b.bins
        )));
    }
    concat_channels(stacked, &[a, b])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    LogmelIv,
    Salsa,
}

impl FeatureFamily {
    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::LogmelIv => "logmel_iv",
            FeatureFamily::Salsa => "salsa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogmelConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Defaults to Nyquist.
    pub fmax: Option<f64>,
}

impl Default for LogmelConfig {
    fn default() -> Self {
        LogmelConfig { window_size: 1024, hop_size: 400, n_mels: 128, fmin: 20.0, fmax: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub logmel: LogmelConfig,
    pub salsa: SalsaConfig,
}

impl ExtractionConfig {
    pub fn hop_size(&self, family: FeatureFamily) -> usize {
        match family {
            FeatureFamily::LogmelIv => self.logmel.hop_size,
            FeatureFamily::Salsa => self.salsa.hop_size,
        }
    }

    pub fn filterbank(&self, sample_rate: u32) -> Result<MelFilterbank> {
        let c = &self.logmel;
        MelFilterbank::new(
            c.n_mels,
            c.fmin,
            c.fmax.unwrap_or(sample_rate as f64 / 2.0),
            c.window_size / 2 + 1,
            sample_rate,
        )
    }
}

/// Seven-channel log-mel + intensity-vector features for one array.
pub fn logmel_iv(clip: &FoaClip, cfg: &LogmelConfig, fb: &MelFilterbank) -> Result<FeatureTensor> {
    let spec = stft(clip, cfg.window_size, cfg.hop_size)?;
    concat_channels(FeatureLayout::LogmelIv, &[&logmel(&spec, fb)?, &intensity_vector(&spec, fb)?])
}

/// Features of one family for one array.
pub fn extract(clip: &FoaClip, family: FeatureFamily, cfg: &ExtractionConfig) -> Result<FeatureTensor> {
    match family {
        FeatureFamily::LogmelIv => logmel_iv(clip, &cfg.logmel, &cfg.filterbank(clip.sample_rate)?),
        FeatureFamily::Salsa => {
            let spec = stft(clip, cfg.salsa.window_size, cfg.salsa.hop_size)?;
            salsa(&spec, &cfg.salsa)
        }
    }
}

/// Fourteen-channel features for a pair of arrays.
pub fn extract_stacked(a: &FoaClip, b: &FoaClip, family: FeatureFamily, cfg: &ExtractionConfig) -> Result<FeatureTensor> {
    stack_arrays(&extract(a, family, cfg)?, &extract(b, family, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ArrayId;
    use num_complex::Complex64;

    fn spec_from(frames: usize, bins: usize, f: impl Fn(usize, usize, usize) -> Complex64) -> ComplexSpectrogram {
        let mut data = Vec::new();
        for c in 0..4 {
            for t in 0..frames {
                for k in 0..bins {
                    data.push(f(c, t, k));
                }
            }
        }
        ComplexSpectrogram { channels: 4, frames, bins, window_size: 2 * (bins - 1), hop_size: 400, sample_rate: 32_000, data }
    }

    #[test]
    fn silent_logmel_sits_at_floor() {
        let fb = MelFilterbank::new(16, 20.0, 16_000.0, 513, 32_000).unwrap();
        let spec = stft(&FoaClip::silent(4096, 32_000, ArrayId::A), 1024, 400).unwrap();
        let lm = logmel(&spec, &fb).unwrap();
        assert!(lm.data.iter().all(|&v| v == -100.0));
        let iv = intensity_vector(&spec, &fb).unwrap();
        assert!(iv.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_band_logmel_matches_hand_sum() {
        let fb = MelFilterbank::new(1, 100.0, 4000.0, 33, 8000).unwrap();
        let spec = spec_from(1, 33, |c, _, k| Complex64::new(0.1 * (k + c) as f64, 0.05 * k as f64));
        let lm = logmel(&spec, &fb).unwrap();
        for c in 0..4 {
            let mut acc = 0.0;
            for k in 0..33 {
                let z = spec.at(c, 0, k);
                acc += fb.row(0)[k] * (z.re * z.re + z.im * z.im);
            }
            assert!((lm.at(c, 0, 0) - 10.0 * acc.log10()).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_amplitude_adds_six_db() {
        let fb = MelFilterbank::new(8, 100.0, 4000.0, 33, 8000).unwrap();
        let spec = spec_from(2, 33, |c, t, k| Complex64::new(1.0 + (c + t + k) as f64, 0.5));
        let mut doubled = spec.clone();
        doubled.data.iter_mut().for_each(|z| *z *= 2.0);
        let (a, b) = (logmel(&spec, &fb).unwrap(), logmel(&doubled, &fb).unwrap());
        let gain = 20.0 * 2f64.log10();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((y - x - gain).abs() < 1e-9);
        }
    }

    #[test]
    fn iv_norm_is_at_most_one_and_mismatch_errors() {
        let fb = MelFilterbank::new(8, 100.0, 4000.0, 33, 8000).unwrap();
        let spec = spec_from(3, 33, |c, t, k| Complex64::new((c * 7 + t * 3 + k) as f64 % 5.0 - 2.0, (k % 3) as f64));
        let iv = intensity_vector(&spec, &fb).unwrap();
        let plane = iv.frames * iv.bins;
        for i in 0..plane {
            let n = (0..3).map(|a| iv.data[a * plane + i].powi(2)).sum::<f64>().sqrt();
            assert!(n <= 1.0 + 1e-6);
        }
        let other = MelFilterbank::new(8, 100.0, 4000.0, 65, 8000).unwrap();
        assert!(logmel(&spec, &other).is_err());
        let mut three = spec.clone();
        three.channels = 3;
        assert!(intensity_vector(&three, &fb).is_err());
    }

    #[test]
    fn scaler_standardizes_each_channel() {
        let data = (0..7 * 5 * 3).map(|i| (i % 11) as f64 * (1 + i / 15) as f64).collect();
        let x = FeatureTensor::new(FeatureLayout::LogmelIv, 5, 3, data).unwrap();
        let s = FeatureScaler::fit(&[&x]).unwrap();
        let y = s.apply(&x).unwrap();
        for c in 0..7 {
            let ch = y.channel(c);
            let m = ch.iter().sum::<f64>() / 15.0;
            let v = ch.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 15.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        let flat = FeatureTensor::zeros(FeatureLayout::LogmelIv, 2, 2);
        assert_eq!(FeatureScaler::fit(&[&flat]).unwrap().std, vec![1.0; 7]);
        assert!(s.apply(&FeatureTensor::zeros(FeatureLayout::LogMel, 5, 3)).is_err());
    }

    #[test]
    fn stacking_contract() {
        let a = FeatureTensor::new(FeatureLayout::LogmelIv, 2, 3, (0..42).map(|v| v as f64).collect()).unwrap();
        let b = FeatureTensor::new(FeatureLayout::LogmelIv, 2, 3, (100..142).map(|v| v as f64).collect()).unwrap();
        let s = stack_arrays(&a, &a).unwrap();
        assert_eq!(s.channels, 14);
        assert_eq!(&s.data[..42], &s.data[42..]);
        let s = stack_arrays(&a, &b).unwrap();
        assert_eq!(s.channel(9), b.channel(2));
        let short = FeatureTensor::zeros(FeatureLayout::LogmelIv, 1, 3);
        assert!(matches!(stack_arrays(&a, &short), Err(Error::Shape(_))));
        let salsa = FeatureTensor::zeros(FeatureLayout::Salsa, 2, 3);
        assert!(stack_arrays(&a, &salsa).is_err());
    }

    #[test]
    fn slicing_frames_keeps_channels() {
        let a = FeatureTensor::new(FeatureLayout::LogmelIv, 4, 2, (0..56).map(|v| v as f64).collect()).unwrap();
        let s = a.slice_frames(1, 3).unwrap();
        assert_eq!((s.frames, s.bins), (2, 2));
        assert_eq!(s.at(6, 1, 1), a.at(6, 2, 1));
    }
}
