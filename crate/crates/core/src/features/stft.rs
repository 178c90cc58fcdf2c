use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scene::FoaClip;

/// Per-channel short-time spectra, laid out `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub window_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
    pub data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn at(&self, channel: usize, frame: usize, bin: usize) -> Complex64 {
        self.data[(channel * self.frames + frame) * self.bins + bin]
    }

    pub fn frame(&self, channel: usize, frame: usize) -> &[Complex64] {
        let start = (channel * self.frames + frame) * self.bins;
        &self.data[start..start + self.bins]
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

pub fn frame_count(n_samples: usize, window_size: usize, hop_size: usize) -> usize {
    if n_samples < window_size {
        0
    } else {
        (n_samples - window_size) / hop_size + 1
    }
}

/// STFT of raw channels: periodic Hann, no edge padding, one-sided bins.
pub fn stft_channels(
    channels: &[&[f64]],
    sample_rate: u32,
    window_size: usize,
    hop_size: usize,
) -> Result<ComplexSpectrogram> {
    if window_size < 2 || !window_size.is_multiple_of(2) || hop_size == 0 {
        return Err(Error::Config(format!("bad STFT geometry: window {window_size}, hop {hop_size}")));
    }
    let n = channels.first().map_or(0, |c| c.len());
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("STFT channels differ in length".into()));
    }
    if n < window_size {
        return Err(Error::ClipTooShort { samples: n, window: window_size });
    }
    let frames = frame_count(n, window_size, hop_size);
    let bins = window_size / 2 + 1;
    let window = hann(window_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(channels.len() * frames * bins);
    for ch in channels {
        for t in 0..frames {
            let seg = &ch[t * hop_size..t * hop_size + window_size];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
    }
    Ok(ComplexSpectrogram {
        channels: channels.len(),
        frames,
        bins,
        window_size,
        hop_size,
        sample_rate,
        data,
    })
}

pub fn stft(clip: &FoaClip, window_size: usize, hop_size: usize) -> Result<ComplexSpectrogram> {
    clip.validate()?;
    let chans: Vec<&[f64]> = clip.channels.iter().map(|c| c.as_slice()).collect();
    stft_channels(&chans, clip.sample_rate, window_size, hop_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ArrayId;
    use rand::{Rng, SeedableRng};

    fn clip_from(ch: [Vec<f64>; 4]) -> FoaClip {
        FoaClip { channels: ch, sample_rate: 32_000, array_id: ArrayId::A }
    }

    /// O(N²) one-sided DFT of a windowed frame.
    fn direct_dft(frame: &[f64], window: &[f64]) -> Vec<Complex64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                frame.iter().zip(window).enumerate().fold(Complex64::new(0.0, 0.0), |acc, (i, (&x, &w))| {
                    let ang = -2.0 * std::f64::consts::PI * (k * i % n) as f64 / n as f64;
                    acc + Complex64::from_polar(x * w, ang)
                })
            })
            .collect()
    }

    #[test]
    fn matches_direct_dft_on_random_three_frame_clip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (win, hop) = (512, 400);
        let n = win + 2 * hop;
        let ch: [Vec<f64>; 4] = std::array::from_fn(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let spec = stft(&clip_from(ch.clone()), win, hop).unwrap();
        assert_eq!((spec.frames, spec.bins), (3, 257));
        let w = hann(win);
        for c in 0..4 {
            for t in 0..3 {
                let oracle = direct_dft(&ch[c][t * hop..t * hop + win], &w);
                for (k, o) in oracle.iter().enumerate() {
                    let got = spec.at(c, t, k);
                    assert!((got - o).norm() <= 1e-9 * o.norm().max(1.0), "c{c} t{t} k{k}");
                }
            }
        }
    }

    #[test]
    fn bin_centred_tone_peaks_at_its_bin() {
        let (win, hop, k) = (1024, 400, 37);
        let f = k as f64 * 32_000.0 / win as f64;
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 32_000.0).sin()).collect();
        let spec = stft(&clip_from([x.clone(), x.clone(), x.clone(), x]), win, hop).unwrap();
        for t in 0..spec.frames {
            let frame = spec.frame(0, t);
            let peak = (0..spec.bins).max_by(|&a, &b| frame[a].norm().total_cmp(&frame[b].norm())).unwrap();
            assert_eq!(peak, k);
        }
    }

    #[test]
    fn silence_and_short_clips() {
        let spec = stft(&FoaClip::silent(2048, 32_000, ArrayId::A), 1024, 400).unwrap();
        assert_eq!(spec.frames, 3);
        assert!(spec.data.iter().all(|z| z.norm() == 0.0));
        assert!(matches!(
            stft(&FoaClip::silent(1000, 32_000, ArrayId::A), 1024, 400),
            Err(Error::ClipTooShort { samples: 1000, window: 1024 })
        ));
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let win = 1024;
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = stft_channels(&[&x], 32_000, win, 400).unwrap();
        let w = hann(win);
        for t in 0..spec.frames {
            let time: f64 = x[t * 400..t * 400 + win].iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
            let f = spec.frame(0, t);
            let inner: f64 = f[1..win / 2].iter().map(|z| z.norm_sqr()).sum();
            let freq = (f[0].norm_sqr() + 2.0 * inner + f[win / 2].norm_sqr()) / win as f64;
            assert!((time - freq).abs() <= 1e-9 * time);
        }
    }
}
