//! Mini-batch training under the PIT objective.

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::binarize::{binarize, to_instances, DEFAULT_THRESHOLD};
use super::optim::{AdamW, LrSchedule};
use super::pit::LossConfig;
use super::shared::{batch_gradients, TrackwiseModel};
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::metrics::{threshold_sweep, EventInstance, PositionMode, ScoreReport};
use crate::seed;
use crate::track::TrackwiseFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub batch_size: usize,
    pub segment_seconds: f64,
    pub seed: u64,
    /// Distance threshold for the per-epoch validation score.
    pub val_threshold_m: f64,
    pub sed_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            schedule: LrSchedule::default(),
            weight_decay: 0.01,
            loss: LossConfig::default(),
            batch_size: 8,
            segment_seconds: 5.0,
            seed: 0,
            val_threshold_m: 1.0,
            sed_threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be finite and non-negative".into()));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::Config("segment_seconds must be positive".into()));
        }
        if !(self.val_threshold_m > 0.0) {
            return Err(Error::Config("val_threshold_m must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Example<I> {
    pub input: I,
    pub target: Vec<TrackwiseFrame>,
}

/// A validation clip scored against reference positions.
#[derive(Debug, Clone)]
pub struct ValClip<I> {
    pub input: I,
    pub references: Vec<EventInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_f_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,val_f_score\n");
        for e in &self.epochs {
            let f = e.val_f_score.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{:e},{:.9},{}\n", e.epoch, e.lr, e.train_loss, f));
        }
        s
    }
}

/// Splits a clip into segments of `out_frames` label frames. Feature frames
/// per label frame are fixed at 4 by the network's pooling. A trailing
/// partial segment is kept.
pub fn segment_clip(features: &FeatureTensor, labels: &[TrackwiseFrame], out_frames: usize) -> Result<Vec<Example<FeatureTensor>>> {
    if out_frames == 0 {
        return Err(Error::Config("segments must span at least one output frame".into()));
    }
    let usable = labels.len().min(features.frames / 4);
    let mut out = Vec::new();
    let mut start = 0;
    while start < usable {
        let end = (start + out_frames).min(usable);
        out.push(Example { input: features.slice_frames(4 * start, 4 * end)?, target: labels[start..end].to_vec() });
        start = end;
    }
    Ok(out)
}

/// Output frames per segment for a feature hop of `hop` samples.
pub fn segment_frames(segment_seconds: f64, sample_rate: u32, hop: usize) -> usize {
    ((segment_seconds * sample_rate as f64) / (4 * hop) as f64).round().max(1.0) as usize
}

/// Scores binarized predictions against reference positions over a set of
/// clips, one report per threshold. Clips are laid end to end in time so
/// frames of different clips never meet. Predicted directions are scaled by
/// the range of the reference they are compared with.
pub fn score_clips(clips: &[(&[TrackwiseFrame], &[EventInstance])], thresholds: &[f64], sed_threshold: f64) -> Result<Vec<ScoreReport>> {
    let mut preds = Vec::new();
    let mut refs = Vec::new();
    let mut offset = 0;
    for (out, references) in clips {
        let shift = |mut e: EventInstance| {
            e.frame += offset;
            e
        };
        preds.extend(to_instances(&binarize(out, sed_threshold)).into_iter().map(shift));
        refs.extend(references.iter().copied().map(shift));
        offset += out.len().max(references.iter().map(|e| e.frame + 1).max().unwrap_or(0));
    }
    threshold_sweep(&preds, &refs, thresholds, PositionMode::DirectionScaledByReference)
}

/// Micro F-score of a model's outputs over validation clips.
pub fn evaluate<M: TrackwiseModel>(model: &M, clips: &[ValClip<M::Input>], threshold_m: f64, sed_threshold: f64) -> Result<f64> {
    let outs: Vec<Vec<TrackwiseFrame>> = clips.iter().map(|c| model.predict(&c.input)).collect::<Result<_>>()?;
    let pairs: Vec<_> = outs.iter().zip(clips).map(|(o, c)| (o.as_slice(), c.references.as_slice())).collect();
    Ok(score_clips(&pairs, &[threshold_m], sed_threshold)?[0].f_score)
}

pub fn train<M: TrackwiseModel>(
    model: &mut M,
    examples: &[Example<M::Input>],
    val: &[ValClip<M::Input>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut opt = AdamW::new(model.params(), cfg.weight_decay);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch, cfg.epochs);
        order.sort_unstable();
        order.shuffle(&mut seed::child_rng(cfg.seed, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&examples[i].input, examples[i].target.as_slice())).collect();
            let (loss, grads) = batch_gradients(model, &batch, &cfg.loss)
                .map_err(|e| match e {
                    Error::NonFinite(why) => Error::NonFinite(format!("epoch {epoch}: {why}")),
                    other => other,
                })?;
            total += loss * chunk.len() as f64;
            opt.step(model.params_mut(), &grads, lr)?;
        }
        if !model.params().all_finite() {
            return Err(Error::NonFinite(format!("parameters diverged in epoch {epoch}")));
        }
        let train_loss = total / examples.len() as f64;
        let val_f_score = if val.is_empty() { None } else { Some(evaluate(model, val, cfg.val_threshold_m, cfg.sed_threshold)?) };
        info!("epoch {epoch}: lr {lr:e} loss {train_loss:.6} val F {val_f_score:?}");
        report.epochs.push(EpochRecord { epoch, lr, train_loss, val_f_score });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;
    use crate::learning::toynet::{ToyNet, ToyNetConfig};
    use rand::Rng;

    fn net() -> ToyNet {
        ToyNet::new(ToyNetConfig { input_channels: 7, input_bins: 8, conv_channels: [4, 4], hidden: 8, classes: 3, ..ToyNetConfig::default() })
            .unwrap()
    }

    fn example(seed_: u64) -> Example<FeatureTensor> {
        let mut rng = seed::rng(seed_);
        let data = (0..7 * 16 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = FeatureTensor::new(FeatureLayout::LogmelIv, 16, 8, data).unwrap();
        let target = (0..4)
            .map(|t| {
                let mut f = TrackwiseFrame::zeros(3, 3);
                f.set_event(0, t % 3, [0.0, 0.0, 1.0]);
                f
            })
            .collect();
        Example { input, target }
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let mut model = net();
        let before = model.params.clone();
        let cfg = TrainConfig { epochs: 1, schedule: LrSchedule { base_lr: 0.0, ..LrSchedule::default() }, weight_decay: 0.0, ..TrainConfig::default() };
        train(&mut model, &[example(1)], &[], &cfg).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let data: Vec<_> = (0..3).map(example).collect();
        let cfg = TrainConfig { epochs: 8, schedule: LrSchedule { base_lr: 3e-3, ..LrSchedule::default() }, batch_size: 3, ..TrainConfig::default() };
        let mut a = net();
        let ra = train(&mut a, &data, &[], &cfg).unwrap();
        let losses = ra.losses();
        assert!(losses.last().unwrap() < &losses[0]);
        let mut b = net();
        let rb = train(&mut b, &data, &[], &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn segmenting_aligns_labels_with_feature_frames() {
        let ex = example(2);
        let segs = segment_clip(&ex.input, &ex.target, 3).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].input.frames, 12);
        assert_eq!(segs[1].target.len(), 1);
        assert_eq!(segs[1].input.at(0, 0, 0), ex.input.at(0, 12, 0));
        assert_eq!(segment_frames(5.0, 16_000, 400), 50);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(train(&mut net(), &[], &[], &TrainConfig::default()).is_err());
    }
}
