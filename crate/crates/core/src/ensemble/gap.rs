//! End-to-end comparison of single predictors, the averaging baseline and
//! the trained track-wise ensemble on permuted synthetic predictors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_ensemble, build_ensemble_input, synth_permuted_predictors, train_ensemble, EnsembleNet, EnsembleNetConfig, PredictorNoise};
use crate::dataset::{random_scenes, DatasetConfig};
use crate::error::{Error, Result};
use crate::learning::train::{score_clips, Example, TrainConfig, ValClip};
use crate::learning::LrSchedule;
use crate::learning::TrackwiseModel;
use crate::metrics::{EventInstance, ScoreReport};
use crate::scene::{label_frames, reference_instances};
use crate::seed;
use crate::track::TrackwiseFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub dataset: DatasetConfig,
    /// Clips used to fit the track-wise ensemble.
    pub train_clips: usize,
    /// Clips all methods are scored on.
    pub eval_clips: usize,
    pub models: usize,
    pub noise: PredictorNoise,
    pub net: EnsembleNetConfig,
    pub train: TrainConfig,
    pub thresholds_m: Vec<f64>,
    /// Score the evaluation split after every training epoch (monitoring
    /// only; it never feeds back into training).
    pub monitor_eval: bool,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig {
            dataset: DatasetConfig {
                duration_s: 4.0,
                events_per_clip: [8, 12],
                event_duration_s: [1.0, 3.0],
                ..DatasetConfig::default()
            },
            train_clips: 3000,
            eval_clips: 50,
            models: 3,
            noise: PredictorNoise::default(),
            net: EnsembleNetConfig { conv_channels: 4, hidden: 48, ..EnsembleNetConfig::default() },
            train: TrainConfig {
                epochs: 8,
                schedule: LrSchedule { base_lr: 3e-3, ..LrSchedule::default() },
                weight_decay: 0.0,
                batch_size: 4,
                ..TrainConfig::default()
            },
            thresholds_m: vec![1.0, 2.0],
            monitor_eval: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub method: String,
    pub reports: Vec<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub thresholds_m: Vec<f64>,
    pub singles: Vec<GapRow>,
    pub average: GapRow,
    pub trackwise: GapRow,
    pub train_losses: Vec<f64>,
    /// Per-epoch F-score of the track-wise ensemble on the evaluation split
    /// at the first threshold, when monitored.
    pub eval_curve: Vec<f64>,
}

impl GapReport {
    pub fn best_single(&self, threshold_index: usize) -> f64 {
        self.singles.iter().map(|r| r.reports[threshold_index].f_score).fold(0.0, f64::max)
    }

    /// Table with one row per method and one F-score column per threshold.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for t in &self.thresholds_m {
            s.push_str(&format!(",f_le_{t}m"));
        }
        s.push('\n');
        for row in self.singles.iter().chain([&self.average, &self.trackwise]) {
            s.push_str(&row.method);
            for r in &row.reports {
                s.push_str(&format!(",{:.3}", r.f_score));
            }
            s.push('\n');
        }
        s
    }
}

struct Clip {
    labels: Vec<TrackwiseFrame>,
    references: Vec<EventInstance>,
    preds: Vec<Vec<TrackwiseFrame>>,
}

fn score(outs: &[Vec<TrackwiseFrame>], clips: &[Clip], cfg: &GapConfig) -> Result<Vec<ScoreReport>> {
    let pairs: Vec<_> = outs.iter().zip(clips).map(|(o, c)| (o.as_slice(), c.references.as_slice())).collect();
    score_clips(&pairs, &cfg.thresholds_m, cfg.train.sed_threshold)
}

pub fn run_gap_experiment(cfg: &GapConfig, master_seed: u64) -> Result<GapReport> {
    if cfg.models < 2 || cfg.train_clips == 0 || cfg.eval_clips == 0 || cfg.thresholds_m.is_empty() {
        return Err(Error::Config("the gap experiment needs >= 2 models and non-empty splits".into()));
    }
    let net_cfg = EnsembleNetConfig {
        models: cfg.models,
        tracks: cfg.dataset.max_overlap,
        classes: cfg.dataset.classes,
        seed: seed::derive(master_seed, 2),
        ..cfg.net.clone()
    };
    let data_cfg = DatasetConfig { count: cfg.train_clips + cfg.eval_clips, ..cfg.dataset.clone() };
    let scenes = random_scenes(&data_cfg, seed::derive(master_seed, 0))?;
    let noise_seed = seed::derive(master_seed, 1);
    let n_frames = data_cfg.label_frames();
    let clips: Vec<Clip> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let labels = label_frames(&e.scene, data_cfg.label_hop, n_frames)?;
            let references = reference_instances(&e.scene, data_cfg.label_hop, n_frames)?;
            let preds = synth_permuted_predictors(&labels, cfg.models, &cfg.noise, seed::derive(noise_seed, i as u64))?;
            Ok(Clip { labels, references, preds })
        })
        .collect::<Result<_>>()?;
    let (train_split, eval_split) = clips.split_at(cfg.train_clips);

    let singles = (0..cfg.models)
        .map(|i| {
            let outs: Vec<_> = eval_split.iter().map(|c| c.preds[i].clone()).collect();
            Ok(GapRow { method: format!("single_{i}"), reports: score(&outs, eval_split, cfg)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let averaged: Vec<_> = eval_split.iter().map(|c| average_ensemble(&c.preds)).collect::<Result<_>>()?;
    let average = GapRow { method: "average_ensemble".into(), reports: score(&averaged, eval_split, cfg)? };

    let examples: Vec<Example<_>> = train_split
        .iter()
        .map(|c| Ok(Example { input: build_ensemble_input(&c.preds)?, target: c.labels.clone() }))
        .collect::<Result<_>>()?;
    let monitor: Vec<ValClip<_>> = if cfg.monitor_eval {
        eval_split.iter().map(|c| Ok(ValClip { input: build_ensemble_input(&c.preds)?, references: c.references.clone() })).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let train_cfg = TrainConfig { seed: seed::derive(master_seed, 3), val_threshold_m: cfg.thresholds_m[0], ..cfg.train.clone() };
    let mut net = EnsembleNet::new(net_cfg)?;
    let report = train_ensemble(&mut net, &examples, &monitor, &train_cfg)?;
    let outs: Vec<_> = eval_split.iter().map(|c| net.predict(&build_ensemble_input(&c.preds)?)).collect::<Result<_>>()?;
    let trackwise = GapRow { method: "trackwise_ensemble".into(), reports: score(&outs, eval_split, cfg)? };
    let eval_curve = report.epochs.iter().filter_map(|e| e.val_f_score).collect();
    Ok(GapReport { thresholds_m: cfg.thresholds_m.clone(), singles, average, trackwise, train_losses: report.losses(), eval_curve })
}
