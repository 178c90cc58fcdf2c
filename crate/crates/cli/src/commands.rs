//! One function per subcommand. Each reads its inputs, writes artifacts into
//! the output directory and returns nothing else.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seld_forge::augment::mixup::mixup;
use seld_forge::augment::rotation::{rotate_foa, rotate_labels, rotation_group};
use seld_forge::augment::AugPolicy;
use seld_forge::dataset::{self, DatasetConfig, ManifestEntry, DEFAULT_LABEL_HOP, MANIFEST};
use seld_forge::ensemble::{
    average_ensemble, build_ensemble_input, read_predictions, run_gap_experiment, train_ensemble, write_predictions, EnsembleNet,
    EnsembleNetConfig, GapConfig, PredictionSet,
};
use seld_forge::features::{self, io as sldf, ExtractionConfig, FeatureFamily, FeatureScaler, FeatureTensor};
use seld_forge::learning::binarize::{binarize, to_instances};
use seld_forge::learning::train::{segment_clip, segment_frames, train, Example, TrainConfig, ValClip};
use seld_forge::learning::{Checkpoint, ToyNet, ToyNetConfig, TrackwiseModel};
use seld_forge::metrics::{self, EventInstance};
use seld_forge::scene::{label_frame_count, reference_instances, rotate_scene, ArrayId, FoaClip, SceneSpec};
use seld_forge::track::TrackwiseFrame;
use seld_forge::{seed, Error, Result};

use crate::config::{resolve, run_config, write_resolved};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_text(path, &s)
}

fn manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    dataset::read_manifest(&dir.join(MANIFEST))
}

fn label_count(scene: &SceneSpec, hop: usize) -> usize {
    label_frame_count(scene.n_samples(), hop)
}

fn feature_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.sldf"))
}

fn prediction_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.sldp"))
}

fn default_label_hop() -> usize {
    DEFAULT_LABEL_HOP
}

fn default_true() -> bool {
    true
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
}
run_config!(SynthConfig);

pub fn synth(mut cfg: SynthConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (seed_, out) = resolve(&mut cfg, seed_, out)?;
    cfg.dataset.validate()?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    let entries = dataset::generate_dataset(&cfg.dataset, seed_, &out)?;
    info!("wrote {} clips to {}", entries.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- extract

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset_dir: PathBuf,
    #[serde(default = "default_family")]
    pub family: FeatureFamily,
    /// Stack both arrays into 14 channels; otherwise array A only.
    #[serde(default = "default_true")]
    pub stacked: bool,
    #[serde(default)]
    pub extraction: ExtractionConfig,
}
run_config!(ExtractConfig);

fn default_family() -> FeatureFamily {
    FeatureFamily::LogmelIv
}

fn load_pair(dir: &Path, clip_id: &str) -> Result<(FoaClip, FoaClip)> {
    Ok((
        dataset::read_wav(&dataset::wav_path(dir, clip_id, ArrayId::A), ArrayId::A)?,
        dataset::read_wav(&dataset::wav_path(dir, clip_id, ArrayId::B), ArrayId::B)?,
    ))
}

fn featurize(a: &FoaClip, b: &FoaClip, family: FeatureFamily, stacked: bool, cfg: &ExtractionConfig) -> Result<FeatureTensor> {
    if stacked {
        features::extract_stacked(a, b, family, cfg)
    } else {
        features::extract(a, family, cfg)
    }
}

pub fn extract(mut cfg: ExtractConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (_, out) = resolve(&mut cfg, seed_, out)?;
    let entries = manifest(&cfg.dataset_dir)?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    entries.par_iter().try_for_each(|e| {
        let (a, b) = load_pair(&cfg.dataset_dir, &e.clip_id)?;
        let feat = featurize(&a, &b, cfg.family, cfg.stacked, &cfg.extraction)?;
        sldf::write(&feature_path(&out, &e.clip_id), &feat)
    })?;
    info!("extracted {} {} feature files", entries.len(), cfg.family.name());
    Ok(())
}

// ---------------------------------------------------------------- augment

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset_dir: PathBuf,
    #[serde(default = "default_family")]
    pub family: FeatureFamily,
    #[serde(default = "default_true")]
    pub stacked: bool,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub policy: AugPolicy,
    /// Augmented copies written per source clip.
    #[serde(default = "one")]
    pub copies: usize,
    #[serde(default = "default_label_hop")]
    pub label_hop: usize,
}
run_config!(AugmentConfig);

fn one() -> usize {
    1
}

struct Source {
    entry: ManifestEntry,
    a: FoaClip,
    b: FoaClip,
    labels: Vec<TrackwiseFrame>,
}

fn load_labels(dir: &Path, entry: &ManifestEntry, hop: usize) -> Result<Vec<TrackwiseFrame>> {
    let s = &entry.scene;
    dataset::read_labels(&dataset::label_path(dir, &entry.clip_id), label_count(s, hop), s.max_overlap, s.classes)
}

/// Writes a dataset-shaped directory (features, label tables, manifest) of
/// augmented clips named `<clip_id>_aug<copy>`.
pub fn augment(mut cfg: AugmentConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (seed_, out) = resolve(&mut cfg, seed_, out)?;
    cfg.policy.seed = seed_;
    cfg.policy.validate()?;
    let entries = manifest(&cfg.dataset_dir)?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    let sources: Vec<Source> = entries
        .into_par_iter()
        .map(|entry| {
            let (a, b) = load_pair(&cfg.dataset_dir, &entry.clip_id)?;
            let labels = load_labels(&cfg.dataset_dir, &entry, cfg.label_hop)?;
            Ok(Source { entry, a, b, labels })
        })
        .collect::<Result<_>>()?;
    let group = rotation_group();
    let jobs: Vec<(usize, usize)> = (0..sources.len()).flat_map(|i| (0..cfg.copies).map(move |c| (i, c))).collect();
    let made: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|&(i, copy)| {
            let src = &sources[i];
            let mut rng = seed::child_rng(seed::derive(seed_, i as u64), copy as u64);
            let (mut a, mut b, mut labels, mut scene) = (src.a.clone(), src.b.clone(), src.labels.clone(), src.entry.scene.clone());
            if cfg.policy.rotation {
                let rot = group[rng.random_range(0..group.len())];
                // Array B records the scene through its own fixed rotation, so
                // it sees the conjugated element.
                let fixed = group[scene.array_b_rotation];
                a = rotate_foa(&a, &rot);
                b = rotate_foa(&b, &fixed.compose(&rot).compose(&fixed.inverse()));
                labels = rotate_labels(&labels, &rot);
                scene = rotate_scene(&scene, &rot);
            }
            if cfg.policy.waveform_mixup && sources.len() > 1 {
                for _ in 0..cfg.policy.mixup_retries {
                    let j = (i + rng.random_range(1..sources.len())) % sources.len();
                    let lambda = cfg.policy.sample_lambda(&mut rng)?;
                    let partner = &sources[j];
                    match mixup(&a, &labels, &partner.a, &partner.labels, lambda) {
                        Ok((mixed_a, mixed_labels)) => {
                            b = mixup(&b, &labels, &partner.b, &partner.labels, lambda)?.0;
                            a = mixed_a;
                            labels = mixed_labels;
                            scene.events.extend(partner.entry.scene.events.iter().cloned());
                            break;
                        }
                        Err(Error::MixupRejected { .. }) => continue,
                        Err(e) => return Err(e),
                    }
                }
            }
            let feat = featurize(&a, &b, cfg.family, cfg.stacked, &cfg.extraction)?;
            let feat = cfg.policy.apply_features(&feat, &mut rng)?;
            let clip_id = format!("{}_aug{copy}", src.entry.clip_id);
            sldf::write(&feature_path(&out, &clip_id), &feat)?;
            dataset::write_labels(&dataset::label_path(&out, &clip_id), &labels)?;
            Ok(ManifestEntry { clip_id, scene })
        })
        .collect::<Result<_>>()?;
    dataset::write_manifest(&out.join(MANIFEST), &made)?;
    info!("wrote {} augmented clips", made.len());
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Directory with `manifest.json` and label tables.
    pub dataset_dir: PathBuf,
    pub features_dir: PathBuf,
    /// Un-augmented clips scored after every epoch.
    #[serde(default)]
    pub val_dataset_dir: Option<PathBuf>,
    #[serde(default)]
    pub val_features_dir: Option<PathBuf>,
    #[serde(default = "default_label_hop")]
    pub label_hop: usize,
    /// Fit per-channel input standardization on the training features.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub model: ToyNetConfig,
    #[serde(default)]
    pub train: TrainConfig,
}
run_config!(TrainCmdConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Architecture {
    Toynet { config: ToyNetConfig },
    Ensemble { config: EnsembleNetConfig },
}

fn load_training_set(dataset_dir: &Path, features_dir: &Path, hop: usize) -> Result<Vec<(ManifestEntry, FeatureTensor, Vec<TrackwiseFrame>)>> {
    manifest(dataset_dir)?
        .into_par_iter()
        .map(|e| {
            let feat = sldf::read(&feature_path(features_dir, &e.clip_id))?;
            let labels = load_labels(dataset_dir, &e, hop)?;
            Ok((e, feat, labels))
        })
        .collect()
}

pub fn train_cmd(mut cfg: TrainCmdConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (seed_, out) = resolve(&mut cfg, seed_, out)?;
    if !cfg.label_hop.is_multiple_of(4) || cfg.label_hop == 0 {
        return Err(Error::Config("label_hop must be a positive multiple of 4".into()));
    }
    cfg.model.seed = seed::derive(seed_, 0);
    cfg.train.seed = seed::derive(seed_, 1);
    cfg.train.validate()?;
    let data = load_training_set(&cfg.dataset_dir, &cfg.features_dir, cfg.label_hop)?;
    let Some((first_entry, first, _)) = data.first() else {
        return Err(Error::Data("training manifest lists no clips".into()));
    };
    cfg.model.input_channels = first.channels;
    cfg.model.input_bins = first.bins;
    if cfg.standardize {
        let tensors: Vec<&FeatureTensor> = data.iter().map(|(_, f, _)| f).collect();
        cfg.model.scaler = Some(FeatureScaler::fit(&tensors)?);
    }
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    let seg = segment_frames(cfg.train.segment_seconds, first_entry.scene.sample_rate, cfg.label_hop / 4);
    let mut examples = Vec::new();
    for (_, feat, labels) in &data {
        examples.extend(segment_clip(feat, labels, seg)?);
    }
    let val = match (&cfg.val_dataset_dir, &cfg.val_features_dir) {
        (Some(d), Some(f)) => manifest(d)?
            .iter()
            .map(|e| {
                let n = label_count(&e.scene, cfg.label_hop);
                Ok(ValClip { input: sldf::read(&feature_path(f, &e.clip_id))?, references: reference_instances(&e.scene, cfg.label_hop, n)? })
            })
            .collect::<Result<Vec<_>>>()?,
        (None, None) => Vec::new(),
        _ => return Err(Error::Config("val_dataset_dir and val_features_dir must be given together".into())),
    };
    let mut net = ToyNet::new(cfg.model.clone())?;
    info!("training {} parameters on {} segments", net.parameter_count(), examples.len());
    let report = train(&mut net, &examples, &val, &cfg.train)?;
    Checkpoint::new(&Architecture::Toynet { config: cfg.model.clone() }, net.params)?.write(&out.join("model.sldm"))?;
    write_text(&out.join("loss_curve.csv"), &report.to_csv())
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub features_dir: PathBuf,
    /// Clips to predict; defaults to every feature file in `features_dir`.
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    #[serde(default = "half")]
    pub sed_threshold: f64,
}
run_config!(PredictConfig);

fn half() -> f64 {
    0.5
}

fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn clip_ids(dataset_dir: Option<&Path>, fallback_dir: &Path, ext: &str) -> Result<Vec<String>> {
    match dataset_dir {
        Some(d) => Ok(manifest(d)?.into_iter().map(|e| e.clip_id).collect()),
        None => list_stems(fallback_dir, ext),
    }
}

fn events_csv(pred: &[TrackwiseFrame], threshold: f64) -> String {
    let mut s = String::from("frame,track,class,x,y,z\n");
    for e in binarize(pred, threshold) {
        s.push_str(&format!("{},{},{},{:.9},{:.9},{:.9}\n", e.frame, e.track, e.class_id, e.doa[0], e.doa[1], e.doa[2]));
    }
    s
}

fn write_prediction(out: &Path, clip_id: &str, pred: Vec<TrackwiseFrame>, threshold: f64) -> Result<()> {
    let (m, k) = pred.first().map_or((0, 0), |f| (f.tracks(), f.classes()));
    write_text(&out.join(format!("{clip_id}.events.csv")), &events_csv(&pred, threshold))?;
    write_predictions(&prediction_path(out, clip_id), &PredictionSet::single(pred), m, k)
}

pub fn predict(mut cfg: PredictConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (_, out) = resolve(&mut cfg, seed_, out)?;
    let ck = Checkpoint::read(&cfg.checkpoint)?;
    let Architecture::Toynet { config } = ck.arch_as()? else {
        return Err(Error::Config("predict needs a single-model checkpoint".into()));
    };
    let net = ToyNet::with_params(config, ck.params)?;
    let ids = clip_ids(cfg.dataset_dir.as_deref(), &cfg.features_dir, "sldf")?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    ids.par_iter().try_for_each(|id| {
        let pred = net.predict(&sldf::read(&feature_path(&cfg.features_dir, id))?)?;
        write_prediction(&out, id, pred, cfg.sed_threshold)
    })?;
    info!("predicted {} clips", ids.len());
    Ok(())
}

// ---------------------------------------------------------------- ensemble

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Average,
    Trackwise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleCmdConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub mode: EnsembleMode,
    /// Directories of `.sldp` files; every model in every file joins the
    /// ensemble, in directory order.
    pub prediction_dirs: Vec<PathBuf>,
    /// Clips to combine; defaults to the `.sldp` files in the first directory.
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    /// Existing ensemble checkpoint; when absent a track-wise run trains one
    /// against the labels in `train_dataset_dir`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub train_dataset_dir: Option<PathBuf>,
    #[serde(default)]
    pub train_prediction_dirs: Vec<PathBuf>,
    #[serde(default = "default_label_hop")]
    pub label_hop: usize,
    #[serde(default)]
    pub net: EnsembleNetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "half")]
    pub sed_threshold: f64,
}
run_config!(EnsembleCmdConfig);

fn gather(dirs: &[PathBuf], id: &str) -> Result<Vec<Vec<TrackwiseFrame>>> {
    let mut models = Vec::new();
    for d in dirs {
        models.extend(read_predictions(&prediction_path(d, id))?.models);
    }
    Ok(models)
}

pub fn ensemble(mut cfg: EnsembleCmdConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (seed_, out) = resolve(&mut cfg, seed_, out)?;
    let first = cfg.prediction_dirs.first().ok_or_else(|| Error::Config("prediction_dirs must not be empty".into()))?.clone();
    let ids = clip_ids(cfg.dataset_dir.as_deref(), &first, "sldp")?;
    cfg.net.seed = seed::derive(seed_, 0);
    cfg.train.seed = seed::derive(seed_, 1);
    prepare(&out)?;
    let net = match cfg.mode {
        EnsembleMode::Average => None,
        EnsembleMode::Trackwise => Some(match &cfg.checkpoint {
            Some(path) => {
                let ck = Checkpoint::read(path)?;
                let Architecture::Ensemble { config } = ck.arch_as()? else {
                    return Err(Error::Config("checkpoint is not an ensemble model".into()));
                };
                EnsembleNet::with_params(config, ck.params)?
            }
            None => {
                let train_dir = cfg
                    .train_dataset_dir
                    .clone()
                    .ok_or_else(|| Error::Config("missing required key `train_dataset_dir` for training a track-wise ensemble".into()))?;
                let pred_dirs = if cfg.train_prediction_dirs.is_empty() { cfg.prediction_dirs.clone() } else { cfg.train_prediction_dirs.clone() };
                let entries = manifest(&train_dir)?;
                let examples: Vec<Example<_>> = entries
                    .par_iter()
                    .map(|e| Ok(Example { input: build_ensemble_input(&gather(&pred_dirs, &e.clip_id)?)?, target: load_labels(&train_dir, e, cfg.label_hop)? }))
                    .collect::<Result<_>>()?;
                let x = &examples.first().ok_or_else(|| Error::Data("no training clips for the ensemble".into()))?.input;
                cfg.net.models = x.models;
                cfg.net.tracks = x.tracks;
                cfg.net.classes = x.classes;
                let mut net = EnsembleNet::new(cfg.net.clone())?;
                let report = train_ensemble(&mut net, &examples, &[], &cfg.train)?;
                Checkpoint::new(&Architecture::Ensemble { config: cfg.net.clone() }, net.params.clone())?.write(&out.join("ensemble.sldm"))?;
                write_text(&out.join("loss_curve.csv"), &report.to_csv())?;
                net
            }
        }),
    };
    write_resolved(&cfg, &out)?;
    ids.par_iter().try_for_each(|id| {
        let preds = gather(&cfg.prediction_dirs, id)?;
        let combined = match &net {
            None => average_ensemble(&preds)?,
            Some(net) => net.predict(&build_ensemble_input(&preds)?)?,
        };
        write_prediction(&out, id, combined, cfg.sed_threshold)
    })?;
    info!("combined {} clips", ids.len());
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// `.sldp` files, or `.events.csv` tables when no `.sldp` exists.
    pub predictions_dir: PathBuf,
    pub dataset_dir: PathBuf,
    #[serde(default = "default_thresholds")]
    pub thresholds_m: Vec<f64>,
    #[serde(default = "half")]
    pub sed_threshold: f64,
    #[serde(default = "default_label_hop")]
    pub label_hop: usize,
    /// Which model of a multi-model `.sldp` file to score.
    #[serde(default)]
    pub model_index: usize,
}
run_config!(EvalConfig);

fn default_thresholds() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn read_events_csv(path: &Path) -> Result<Vec<EventInstance>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("frame,track,class,x,y,z") {
        return Err(Error::Format { path: path.to_path_buf(), reason: "missing event header".into() });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Format { path: path.to_path_buf(), reason: format!("line {}", i + 2) };
            let c: Vec<&str> = l.split(',').map(str::trim).collect();
            if c.len() != 6 {
                return Err(bad());
            }
            let f = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
            Ok(EventInstance {
                frame: c[0].parse().map_err(|_| bad())?,
                class_id: c[2].parse().map_err(|_| bad())?,
                position: [f(c[3])?, f(c[4])?, f(c[5])?],
            })
        })
        .collect()
}

pub fn eval(mut cfg: EvalConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (_, out) = resolve(&mut cfg, seed_, out)?;
    let entries = manifest(&cfg.dataset_dir)?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    let mut all_preds = Vec::new();
    let mut all_refs = Vec::new();
    let mut offset = 0;
    for e in &entries {
        let n = label_count(&e.scene, cfg.label_hop);
        let refs = reference_instances(&e.scene, cfg.label_hop, n)?;
        let sldp = prediction_path(&cfg.predictions_dir, &e.clip_id);
        let preds = if sldp.exists() {
            let set = read_predictions(&sldp)?;
            let seq = set.models.get(cfg.model_index).ok_or_else(|| Error::Config(format!("model_index {} out of range", cfg.model_index)))?;
            to_instances(&binarize(seq, cfg.sed_threshold))
        } else {
            read_events_csv(&cfg.predictions_dir.join(format!("{}.events.csv", e.clip_id)))?
        };
        let span = preds.iter().chain(&refs).map(|x| x.frame + 1).max().unwrap_or(0).max(n);
        let shift = |mut x: EventInstance| {
            x.frame += offset;
            x
        };
        all_preds.extend(preds.into_iter().map(shift));
        all_refs.extend(refs.into_iter().map(shift));
        offset += span;
    }
    let reports = metrics::threshold_sweep(&all_preds, &all_refs, &cfg.thresholds_m, metrics::PositionMode::DirectionScaledByReference)?;
    for r in &reports {
        info!("F(<= {} m) = {:.3} (P {:.3}, R {:.3})", r.threshold_m, r.f_score, r.precision, r.recall);
    }
    write_json(&out.join("report.json"), &reports)?;
    write_text(&out.join("sweep.csv"), &metrics::sweep_csv(&reports))
}

// ---------------------------------------------------------------- repro-ensemble-gap

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub gap: GapConfig,
}
run_config!(ReproConfig);

pub fn repro_ensemble_gap(mut cfg: ReproConfig, seed_: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let (seed_, out) = resolve(&mut cfg, seed_, out)?;
    prepare(&out)?;
    write_resolved(&cfg, &out)?;
    let report = run_gap_experiment(&cfg.gap, seed_)?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("table.csv"), &report.to_csv())?;
    info!("\n{}", report.to_csv());
    Ok(())
}
