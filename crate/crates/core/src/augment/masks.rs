use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureTensor;

fn width(rng: &mut impl Rng, max: usize) -> usize {
    rng.random_range(1..=max)
}

fn check(name: &str, value: usize, dim: usize) -> Result<()> {
    if value == 0 || value > dim {
        return Err(Error::Config(format!("{name} = {value} must lie in [1, {dim}]")));
    }
    Ok(())
}

/// Sets frames `[t0, t1)` × bins `[f0, f1)` to each channel's mask value.
pub(crate) fn mask_rect(feat: &mut FeatureTensor, t0: usize, t1: usize, f0: usize, f1: usize) {
    for c in 0..feat.channels {
        let value = feat.layout.mask_value(c);
        for t in t0..t1 {
            let i = feat.index(c, t, 0);
            feat.data[i + f0..i + f1].iter_mut().for_each(|v| *v = value);
        }
    }
}

/// Masks `n_time` random frame stripes and `n_freq` random bin stripes
/// across every channel.
pub fn spec_augment(
    feat: &FeatureTensor,
    n_time: usize,
    n_freq: usize,
    max_time_width: usize,
    max_freq_width: usize,
    rng: &mut impl Rng,
) -> Result<FeatureTensor> {
    let mut out = feat.clone();
    if n_time > 0 {
        check("max_time_width", max_time_width, feat.frames)?;
    }
    if n_freq > 0 {
        check("max_freq_width", max_freq_width, feat.bins)?;
    }
    for _ in 0..n_time {
        let w = width(rng, max_time_width);
        let t0 = rng.random_range(0..=feat.frames - w);
        mask_rect(&mut out, t0, t0 + w, 0, feat.bins);
    }
    for _ in 0..n_freq {
        let w = width(rng, max_freq_width);
        let f0 = rng.random_range(0..=feat.bins - w);
        mask_rect(&mut out, 0, feat.frames, f0, f0 + w);
    }
    Ok(out)
}

/// Masks `n_rects` random rectangles of at most `max_h` bins by `max_w`
/// frames across every channel.
pub fn cutout(feat: &FeatureTensor, n_rects: usize, max_h: usize, max_w: usize, rng: &mut impl Rng) -> Result<FeatureTensor> {
    let mut out = feat.clone();
    if n_rects > 0 {
        check("max_h", max_h, feat.bins)?;
        check("max_w", max_w, feat.frames)?;
    }
    for _ in 0..n_rects {
        let (h, w) = (width(rng, max_h), width(rng, max_w));
        let f0 = rng.random_range(0..=feat.bins - h);
        let t0 = rng.random_range(0..=feat.frames - w);
        mask_rect(&mut out, t0, t0 + w, f0, f0 + h);
    }
    Ok(out)
}
