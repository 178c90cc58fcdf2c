//! Randomized scene generation and the on-disk dataset layout.
//!
//! A dataset directory holds `manifest.json`, and per clip the two array
//! recordings `<clip_id>_A.wav` / `<clip_id>_B.wav` (4-channel float WAV)
//! plus a label table `<clip_id>.csv` with header `frame,track,class,x,y,z`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{check_overlap, encode_foa, label_frame_count, label_frames, ArrayId, FoaClip, SceneSpec, SignalKind, SourceEvent};
use crate::scene::{DEFAULT_ARRAY_B_ROTATION, DEFAULT_SAMPLE_RATE};
use crate::seed;
use crate::track::{TrackwiseFrame, DEFAULT_CLASSES, DEFAULT_TRACKS};

pub const MANIFEST: &str = "manifest.json";
/// Label hop in samples: four 400-sample feature hops.
pub const DEFAULT_LABEL_HOP: usize = 1600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub classes: usize,
    pub max_overlap: usize,
    /// Inclusive range of events drawn per clip.
    pub events_per_clip: [usize; 2],
    pub event_duration_s: [f64; 2],
    pub gain: [f64; 2],
    /// Room extent in metres; the array sits at its centre.
    pub room_m: [f64; 3],
    pub min_distance_m: f64,
    pub array_b_rotation: usize,
    pub label_hop: usize,
    /// Snap onsets and offsets to the label hop.
    pub align_to_labels: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 10,
            duration_s: 5.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            classes: DEFAULT_CLASSES,
            max_overlap: DEFAULT_TRACKS,
            events_per_clip: [1, 4],
            event_duration_s: [0.5, 2.0],
            gain: [0.5, 1.0],
            room_m: [6.0, 5.0, 3.0],
            min_distance_m: 1.0,
            array_b_rotation: DEFAULT_ARRAY_B_ROTATION,
            label_hop: DEFAULT_LABEL_HOP,
            align_to_labels: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.duration_s > 0.0) || self.sample_rate == 0 || self.classes == 0 || self.max_overlap == 0 {
            return bad("duration, sample_rate, classes and max_overlap must be positive");
        }
        if self.events_per_clip[0] > self.events_per_clip[1] {
            return bad("events_per_clip must be [min, max]");
        }
        let [lo, hi] = self.event_duration_s;
        if !(lo > 0.0 && lo <= hi && lo <= self.duration_s) {
            return bad("event_duration_s must be [min, max] with 0 < min <= duration");
        }
        if !(self.gain[0] > 0.0 && self.gain[0] <= self.gain[1] && self.gain[1] <= 1.0) {
            return bad("gain must be [min, max] within (0, 1]");
        }
        if self.room_m.iter().any(|&d| !(d > 0.0)) || !(self.min_distance_m > 0.0) {
            return bad("room_m and min_distance_m must be positive");
        }
        let half = self.room_m.map(|d| d / 2.0);
        if self.min_distance_m >= (half[0] * half[0] + half[1] * half[1] + half[2] * half[2]).sqrt() {
            return bad("min_distance_m leaves no room for sources");
        }
        if self.array_b_rotation >= 48 {
            return bad("array_b_rotation must index the 48-element rotation group");
        }
        if self.label_hop == 0 {
            return bad("label_hop must be positive");
        }
        for k in 0..self.classes {
            if let Err(why) = SignalKind::for_class(k).validate(self.sample_rate) {
                return Err(Error::Config(format!("class {k} signal ({why}) does not fit under the Nyquist rate")));
            }
        }
        Ok(())
    }

    pub fn label_frames(&self) -> usize {
        label_frame_count((self.duration_s * self.sample_rate as f64).round() as usize, self.label_hop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    #[serde(flatten)]
    pub scene: SceneSpec,
}

pub fn clip_id(index: usize) -> String {
    format!("clip{index:05}")
}

fn sample_position(cfg: &DatasetConfig, rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let p = cfg.room_m.map(|d| rng.random_range(-d / 2.0..=d / 2.0));
        if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() >= cfg.min_distance_m {
            return p;
        }
    }
}

/// Draws one scene. Events that would exceed the overlap cap are redrawn a
/// bounded number of times and then dropped.
pub fn random_scene(cfg: &DatasetConfig, scene_seed: u64) -> Result<SceneSpec> {
    cfg.validate()?;
    let mut rng = seed::rng(scene_seed);
    let target = rng.random_range(cfg.events_per_clip[0]..=cfg.events_per_clip[1]);
    let sr = cfg.sample_rate as f64;
    let quantum = if cfg.align_to_labels { cfg.label_hop as f64 / sr } else { 1.0 / sr };
    let snap = |t: f64| (t / quantum).round() * quantum;
    let mut events: Vec<SourceEvent> = Vec::with_capacity(target);
    for _ in 0..target {
        for _attempt in 0..32 {
            let len = rng.random_range(cfg.event_duration_s[0]..=cfg.event_duration_s[1]).min(cfg.duration_s);
            let onset = snap(rng.random_range(0.0..=cfg.duration_s - len));
            let offset = snap(onset + len).min(cfg.duration_s);
            let class_id = rng.random_range(0..cfg.classes);
            let position = sample_position(cfg, &mut rng);
            let gain = rng.random_range(cfg.gain[0]..=cfg.gain[1]);
            if offset <= onset {
                continue;
            }
            let e = SourceEvent { class_id, onset_s: onset, offset_s: offset, position, signal_kind: SignalKind::for_class(class_id), gain };
            events.push(e);
            if check_overlap(&events, cfg.sample_rate, cfg.max_overlap).is_ok() {
                break;
            }
            events.pop();
        }
    }
    let scene = SceneSpec {
        duration_s: cfg.duration_s,
        sample_rate: cfg.sample_rate,
        events,
        seed: scene_seed,
        classes: cfg.classes,
        max_overlap: cfg.max_overlap,
        array_b_rotation: cfg.array_b_rotation,
    };
    scene.validate()?;
    Ok(scene)
}

/// Scene `i` is drawn from `derive(master_seed, i)`, so any subset of clips
/// can be regenerated independently and in any order.
pub fn random_scenes(cfg: &DatasetConfig, master_seed: u64) -> Result<Vec<ManifestEntry>> {
    (0..cfg.count)
        .into_par_iter()
        .map(|i| Ok(ManifestEntry { clip_id: clip_id(i), scene: random_scene(cfg, seed::derive(master_seed, i as u64))? }))
        .collect()
}

pub fn generate_dataset(cfg: &DatasetConfig, master_seed: u64, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let entries = random_scenes(cfg, master_seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    entries.par_iter().try_for_each(|entry| {
        for array in [ArrayId::A, ArrayId::B] {
            write_wav(&wav_path(dir, &entry.clip_id, array), &encode_foa(&entry.scene, array)?)?;
        }
        let labels = label_frames(&entry.scene, cfg.label_hop, cfg.label_frames())?;
        write_labels(&label_path(dir, &entry.clip_id), &labels)
    })?;
    write_manifest(&dir.join(MANIFEST), &entries)?;
    Ok(entries)
}

pub fn wav_path(dir: &Path, clip_id: &str, array: ArrayId) -> PathBuf {
    dir.join(format!("{clip_id}_{}.wav", array.suffix()))
}

pub fn label_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.csv"))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(entries).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}

pub fn write_wav(path: &Path, clip: &FoaClip) -> Result<()> {
    clip.validate()?;
    let spec = hound::WavSpec { channels: 4, sample_rate: clip.sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let wav_err = |e| Error::Wav { path: path.to_path_buf(), source: e };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for n in 0..clip.len() {
        for c in &clip.channels {
            w.write_sample(c[n] as f32).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

pub fn read_wav(path: &Path, array_id: ArrayId) -> Result<FoaClip> {
    let wav_err = |e| Error::Wav { path: path.to_path_buf(), source: e };
    let r = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = r.spec();
    if spec.channels != 4 || spec.sample_format != hound::SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(Error::format(path, "expected 4-channel 32-bit float WAV"));
    }
    let samples: Vec<f32> = r.into_samples::<f32>().collect::<std::result::Result<_, _>>().map_err(wav_err)?;
    let mut clip = FoaClip::silent(samples.len() / 4, spec.sample_rate, array_id);
    for (n, frame) in samples.chunks_exact(4).enumerate() {
        for (c, &v) in frame.iter().enumerate() {
            clip.channels[c][n] = v as f64;
        }
    }
    Ok(clip)
}

pub fn encode_labels(labels: &[TrackwiseFrame]) -> String {
    let mut s = String::from("frame,track,class,x,y,z\n");
    for (t, f) in labels.iter().enumerate() {
        for m in 0..f.tracks() {
            if let Some(k) = f.active_class(m) {
                let d = f.doa_row(m);
                s.push_str(&format!("{t},{m},{k},{:.9},{:.9},{:.9}\n", d[0], d[1], d[2]));
            }
        }
    }
    s
}

pub fn write_labels(path: &Path, labels: &[TrackwiseFrame]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Parses a label table into `frames` frames of `tracks × classes`.
pub fn decode_labels(text: &str, path: &Path, frames: usize, tracks: usize, classes: usize) -> Result<Vec<TrackwiseFrame>> {
    let mut out = vec![TrackwiseFrame::zeros(tracks, classes); frames];
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("frame,track,class,x,y,z") {
        return Err(Error::format(path, "missing label header"));
    }
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |why: &str| Error::format(path, format!("line {}: {why}", i + 2));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let real = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("bad number"));
        let (t, m, k) = (int(cols[0])?, int(cols[1])?, int(cols[2])?);
        if t >= frames || m >= tracks || k >= classes {
            return Err(bad("index out of range"));
        }
        out[t].set_event(m, k, [real(cols[3])?, real(cols[4])?, real(cols[5])?]);
    }
    Ok(out)
}

pub fn read_labels(path: &Path, frames: usize, tracks: usize, classes: usize) -> Result<Vec<TrackwiseFrame>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&text, path, frames, tracks, classes)
}

/// Creates `path` and writes `bytes`, failing on an existing file.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create_new(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig { count: 4, duration_s: 1.0, sample_rate: 16_000, events_per_clip: [3, 6], event_duration_s: [0.2, 0.6], label_hop: 400, ..DatasetConfig::default() }
    }

    #[test]
    fn scenes_respect_overlap_and_geometry() {
        let cfg = DatasetConfig { count: 10, duration_s: 2.0, events_per_clip: [4, 8], ..small() };
        for entry in random_scenes(&cfg, 5).unwrap() {
            check_overlap(&entry.scene.events, cfg.sample_rate, 3).unwrap();
            for e in &entry.scene.events {
                assert!(e.distance() >= 1.0);
                assert!(e.position[0].abs() <= 3.0 && e.position[1].abs() <= 2.5 && e.position[2].abs() <= 1.5);
            }
            let labels = label_frames(&entry.scene, cfg.label_hop, cfg.label_frames()).unwrap();
            for f in &labels {
                assert!((0..3).filter(|&m| f.active_class(m).is_some()).count() <= 3);
            }
        }
    }

    #[test]
    fn classes_above_nyquist_rejected() {
        assert!(DatasetConfig { sample_rate: 8000, ..small() }.validate().is_err());
        assert!(DatasetConfig { sample_rate: 8000, classes: 8, ..small() }.validate().is_ok());
    }

    #[test]
    fn empty_dataset_writes_only_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let entries = generate_dataset(&DatasetConfig { count: 0, ..small() }, 1, dir.path()).unwrap();
        assert!(entries.is_empty());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(read_manifest(&dir.path().join(MANIFEST)).unwrap().is_empty());
    }

    #[test]
    fn generation_is_byte_reproducible_and_readable() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small();
        let entries = generate_dataset(&cfg, 42, a.path()).unwrap();
        generate_dataset(&cfg, 42, b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 1 + 3 * 4);
        for n in &names {
            assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap());
        }
        let e = &entries[1];
        assert_eq!(read_manifest(&a.path().join(MANIFEST)).unwrap(), entries);
        let clip = read_wav(&wav_path(a.path(), &e.clip_id, ArrayId::A), ArrayId::A).unwrap();
        let direct = encode_foa(&e.scene, ArrayId::A).unwrap();
        for (x, y) in clip.channels.iter().flatten().zip(direct.channels.iter().flatten()) {
            assert_eq!(*x, *y as f32 as f64);
        }
        let labels = read_labels(&label_path(a.path(), &e.clip_id), cfg.label_frames(), 3, cfg.classes).unwrap();
        let truth = label_frames(&e.scene, cfg.label_hop, cfg.label_frames()).unwrap();
        for (x, y) in labels.iter().zip(&truth) {
            assert_eq!(x.sed, y.sed);
            for (p, q) in x.doa.iter().zip(&y.doa) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn malformed_labels_rejected() {
        let p = Path::new("l.csv");
        assert!(decode_labels("frame,track,class,x,y,z\n0,0,0,1,0\n", p, 1, 3, 2).is_err());
        assert!(decode_labels("frame,track,class,x,y,z\n5,0,0,1,0,0\n", p, 1, 3, 2).is_err());
        assert!(decode_labels("f\n", p, 1, 3, 2).is_err());
    }
}
