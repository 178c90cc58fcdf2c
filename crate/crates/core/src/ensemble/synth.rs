use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::pit::permutations;
use crate::seed;
use crate::track::{norm, TrackwiseFrame};

/// Corruptions applied by [`synth_permuted_predictors`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorNoise {
    /// Standard deviation, in radians, of the angle each direction is
    /// rotated by.
    pub doa_sigma_rad: f64,
    /// Draw a random track permutation per clip and predictor.
    pub permute_tracks: bool,
    pub active_prob: f64,
    pub inactive_prob: f64,
    /// Half-width of the uniform jitter added to every probability.
    pub jitter: f64,
}

impl Default for PredictorNoise {
    fn default() -> Self {
        PredictorNoise { doa_sigma_rad: 0.05, permute_tracks: true, active_prob: 0.9, inactive_prob: 0.1, jitter: 0.05 }
    }
}

/// Rotates `u` by `angle` towards a uniformly random perpendicular direction.
fn perturb_direction(u: [f64; 3], angle: f64, rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let dot = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
        let w = [v[0] - dot * u[0], v[1] - dot * u[1], v[2] - dot * u[2]];
        let n = norm(w);
        if n > 1e-9 {
            let (s, c) = angle.sin_cos();
            return std::array::from_fn(|i| c * u[i] + s * w[i] / n);
        }
    }
}

/// Noisy copies of ground-truth labels, one per predictor. Predictor `i`
/// draws from `child_rng(seed, i)`: a clip-wide track permutation, class
/// probabilities smoothed to `active_prob`/`inactive_prob` plus uniform
/// jitter, and active directions rotated by a Gaussian angle. Inactive
/// tracks keep zero directions.
pub fn synth_permuted_predictors(labels: &[TrackwiseFrame], n: usize, noise: &PredictorNoise, seed_: u64) -> Result<Vec<Vec<TrackwiseFrame>>> {
    if !(noise.doa_sigma_rad >= 0.0 && noise.jitter >= 0.0) {
        return Err(Error::Config("predictor noise levels must be non-negative".into()));
    }
    let Some(first) = labels.first() else { return Ok(vec![Vec::new(); n]) };
    let (m, k) = (first.tracks(), first.classes());
    let perms = permutations(m);
    let angle = Normal::new(0.0, noise.doa_sigma_rad).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..n)
        .map(|i| {
            let mut rng = seed::child_rng(seed_, i as u64);
            let perm = if noise.permute_tracks { perms.choose(&mut rng).unwrap().clone() } else { (0..m).collect() };
            labels
                .iter()
                .map(|label| {
                    let src = label.permuted(&perm);
                    let mut out = TrackwiseFrame::zeros(m, k);
                    for (o, &y) in out.sed.iter_mut().zip(&src.sed) {
                        let base = if y > 0.5 { noise.active_prob } else { noise.inactive_prob };
                        let j = if noise.jitter > 0.0 { rng.random_range(-noise.jitter..=noise.jitter) } else { 0.0 };
                        *o = (base + j).clamp(0.0, 1.0);
                    }
                    for track in 0..m {
                        let u = src.doa_row(track);
                        if norm(u) > 0.0 {
                            let theta = angle.sample(&mut rng);
                            out.set_doa(track, perturb_direction(u, theta, &mut rng));
                        }
                    }
                    out
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<TrackwiseFrame> {
        (0..6)
            .map(|t| {
                let mut f = TrackwiseFrame::zeros(3, 4);
                f.set_event(0, t % 4, [0.0, 0.6, 0.8]);
                if t > 2 {
                    f.set_event(2, 1, [1.0, 0.0, 0.0]);
                }
                f
            })
            .collect()
    }

    #[test]
    fn noiseless_identity_predictor_is_smoothed_labels() {
        let noise = PredictorNoise { doa_sigma_rad: 0.0, permute_tracks: false, jitter: 0.0, ..PredictorNoise::default() };
        let y = labels();
        let p = synth_permuted_predictors(&y, 1, &noise, 3).unwrap();
        for (a, b) in p[0].iter().zip(&y) {
            assert_eq!(a.doa, b.doa);
            for (pa, pb) in a.sed.iter().zip(&b.sed) {
                assert_eq!(*pa, if *pb > 0.5 { 0.9 } else { 0.1 });
            }
        }
    }

    #[test]
    fn rotation_angle_matches_draw() {
        let mut rng = seed::rng(1);
        for _ in 0..50 {
            let u = [0.48, 0.6, 0.64];
            let r = perturb_direction(u, 0.3, &mut rng);
            let dot: f64 = (0..3).map(|i| u[i] * r[i]).sum();
            assert!((dot.acos() - 0.3).abs() < 1e-9);
            assert!((norm(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_is_per_clip_and_deterministic() {
        let y = labels();
        let a = synth_permuted_predictors(&y, 4, &PredictorNoise::default(), 9).unwrap();
        assert_eq!(a, synth_permuted_predictors(&y, 4, &PredictorNoise::default(), 9).unwrap());
        for p in &a {
            let t0 = (0..3).find(|&m| p[0].sed_row(m).iter().any(|&v| v > 0.5)).unwrap();
            for f in p {
                assert!(f.sed_row(t0).iter().any(|&v| v > 0.5));
                assert!(f.sed.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
