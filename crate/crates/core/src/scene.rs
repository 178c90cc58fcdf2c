//! Synthetic first-order Ambisonics scenes with exact ground truth.
//!
//! Sources are parametric signals encoded anechoically at the origin-centred
//! array with channel order (W, X, Y, Z), W unscaled and each directional
//! channel weighted by the matching component of the unit source direction.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::rotation::{rotation_group, RotationElement};
use crate::error::{Error, Result};
use crate::metrics::EventInstance;
use crate::seed;
use crate::track::{norm, normalize, TrackwiseFrame, DEFAULT_CLASSES, DEFAULT_TRACKS};

pub const DEFAULT_SAMPLE_RATE: u32 = 32_000;
/// Distances below this are clamped in the 1/r attenuation.
pub const MIN_DISTANCE_M: f64 = 0.3;
/// Partials summed to build band-limited noise.
const NOISE_PARTIALS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    Sine { freq_hz: f64 },
    BandNoise { lo_hz: f64, hi_hz: f64 },
    ToneBurst { freq_hz: f64, am_rate_hz: f64 },
}

impl SignalKind {
    /// The signal family that identifies `class_id` in generated datasets.
    ///
    /// Classes cycle through sine, band noise and tone burst, with centre
    /// frequencies spaced geometrically so neighbouring classes land in
    /// different mel bands.
    pub fn for_class(class_id: usize) -> SignalKind {
        let centre = 220.0 * 1.3f64.powi(class_id as i32);
        match class_id % 3 {
            0 => SignalKind::Sine { freq_hz: centre },
            1 => SignalKind::BandNoise { lo_hz: centre / 1.12, hi_hz: centre * 1.12 },
            _ => SignalKind::ToneBurst { freq_hz: centre, am_rate_hz: 4.0 },
        }
    }

    pub(crate) fn validate(&self, sample_rate: u32) -> std::result::Result<(), String> {
        let nyquist = sample_rate as f64 / 2.0;
        let ok = |f: f64| f.is_finite() && f > 0.0 && f < nyquist;
        match *self {
            SignalKind::Sine { freq_hz } if !ok(freq_hz) => Err(format!("sine frequency {freq_hz} Hz")),
            SignalKind::BandNoise { lo_hz, hi_hz } if !(ok(lo_hz) && ok(hi_hz) && lo_hz < hi_hz) => {
                Err(format!("noise band [{lo_hz}, {hi_hz}] Hz"))
            }
            SignalKind::ToneBurst { freq_hz, am_rate_hz }
                if !(ok(freq_hz) && am_rate_hz.is_finite() && am_rate_hz > 0.0) =>
            {
                Err(format!("tone burst {freq_hz} Hz / {am_rate_hz} Hz"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEvent {
    pub class_id: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    /// Cartesian metres relative to the array origin.
    pub position: [f64; 3],
    pub signal_kind: SignalKind,
    pub gain: f64,
}

impl SourceEvent {
    pub fn direction(&self) -> [f64; 3] {
        normalize(self.position)
    }

    pub fn distance(&self) -> f64 {
        norm(self.position)
    }

    /// Half-open sample span `[start, end)`.
    pub fn sample_span(&self, sample_rate: u32) -> (usize, usize) {
        let sr = sample_rate as f64;
        ((self.onset_s * sr).round() as usize, (self.offset_s * sr).round() as usize)
    }
}

fn default_classes() -> usize {
    DEFAULT_CLASSES
}
fn default_max_overlap() -> usize {
    DEFAULT_TRACKS
}
fn default_rotation_b() -> usize {
    DEFAULT_ARRAY_B_ROTATION
}

/// Rotation applied to array B: x→y, y→−x, z→z.
pub const DEFAULT_ARRAY_B_ROTATION: usize = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub sample_rate: u32,
    pub events: Vec<SourceEvent>,
    pub seed: u64,
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Maximum polyphony, which is also the number of label tracks.
    #[serde(default = "default_max_overlap")]
    pub max_overlap: usize,
    /// Index into the rotation group for the second array.
    #[serde(default = "default_rotation_b")]
    pub array_b_rotation: usize,
}

impl SceneSpec {
    pub fn new(duration_s: f64, events: Vec<SourceEvent>, seed: u64) -> Self {
        SceneSpec {
            duration_s,
            sample_rate: DEFAULT_SAMPLE_RATE,
            events,
            seed,
            classes: DEFAULT_CLASSES,
            max_overlap: DEFAULT_TRACKS,
            array_b_rotation: DEFAULT_ARRAY_B_ROTATION,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) || self.sample_rate == 0 {
            return Err(Error::Config(format!(
                "scene needs positive duration and sample rate, got {} s at {} Hz",
                self.duration_s, self.sample_rate
            )));
        }
        if self.array_b_rotation >= 48 {
            return Err(Error::Config(format!("rotation index {} outside [0, 47]", self.array_b_rotation)));
        }
        for (index, e) in self.events.iter().enumerate() {
            let bad = |reason: String| Err(Error::InvalidEvent { index, reason });
            if e.class_id >= self.classes {
                return bad(format!("class {} not below {}", e.class_id, self.classes));
            }
            if !(e.onset_s >= 0.0 && e.offset_s > e.onset_s && e.offset_s <= self.duration_s) {
                return bad(format!("span [{}, {}) s outside the scene", e.onset_s, e.offset_s));
            }
            if !(e.gain > 0.0 && e.gain <= 1.0) {
                return bad(format!("gain {} outside (0, 1]", e.gain));
            }
            if e.position.iter().any(|c| !c.is_finite()) {
                return bad("non-finite position".into());
            }
            if norm(e.position) == 0.0 {
                return Err(Error::ZeroPosition { index });
            }
            if let Err(reason) = e.signal_kind.validate(self.sample_rate) {
                return bad(reason);
            }
        }
        check_overlap(&self.events, self.sample_rate, self.max_overlap)
    }

    /// Sample spans of every event in input order.
    fn spans(&self) -> Vec<(usize, usize)> {
        self.events.iter().map(|e| e.sample_span(self.sample_rate)).collect()
    }
}

/// Rejects event sets whose polyphony exceeds `cap` at any sample.
pub fn check_overlap(events: &[SourceEvent], sample_rate: u32, cap: usize) -> Result<()> {
    let mut edges: Vec<(usize, i32)> = Vec::with_capacity(events.len() * 2);
    for e in events {
        let (s, t) = e.sample_span(sample_rate);
        edges.push((s, 1));
        edges.push((t, -1));
    }
    // Ends sort before starts at the same sample: spans are half-open.
    edges.sort_unstable();
    let mut active = 0i32;
    for (at, delta) in edges {
        active += delta;
        if active as usize > cap && delta > 0 {
            return Err(Error::OverlapExceeded {
                time_s: at as f64 / sample_rate as f64,
                active: active as usize,
                cap,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArrayId {
    A,
    B,
}

impl ArrayId {
    pub fn suffix(self) -> &'static str {
        match self {
            ArrayId::A => "A",
            ArrayId::B => "B",
        }
    }
}

/// Four-channel (W, X, Y, Z) time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaClip {
    pub channels: [Vec<f64>; 4],
    pub sample_rate: u32,
    pub array_id: ArrayId,
}

impl FoaClip {
    pub fn silent(n_samples: usize, sample_rate: u32, array_id: ArrayId) -> Self {
        FoaClip {
            channels: std::array::from_fn(|_| vec![0.0; n_samples]),
            sample_rate,
            array_id,
        }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("FOA channels differ in length".into()));
        }
        if self.channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FOA clip sample".into()));
        }
        Ok(())
    }
}

/// Renders the dry source waveform of event `index` over its active span.
pub fn render_source(scene: &SceneSpec, index: usize) -> Vec<f64> {
    let e = &scene.events[index];
    let (start, end) = e.sample_span(scene.sample_rate);
    let sr = scene.sample_rate as f64;
    let len = end.saturating_sub(start);
    match e.signal_kind {
        SignalKind::Sine { freq_hz } => {
            (0..len).map(|n| (2.0 * PI * freq_hz * n as f64 / sr).sin()).collect()
        }
        SignalKind::ToneBurst { freq_hz, am_rate_hz } => (0..len)
            .map(|n| {
                let t = n as f64 / sr;
                let envelope = 0.5 * (1.0 - (2.0 * PI * am_rate_hz * t).cos());
                // Keep a small floor so the burst never goes fully silent.
                (0.1 + 0.9 * envelope) * (2.0 * PI * freq_hz * t).sin()
            })
            .collect(),
        SignalKind::BandNoise { lo_hz, hi_hz } => {
            let mut rng = seed::child_rng(scene.seed, index as u64);
            let partials: Vec<(f64, f64)> = (0..NOISE_PARTIALS)
                .map(|_| (rng.random_range(lo_hz..hi_hz), rng.random_range(0.0..2.0 * PI)))
                .collect();
            let scale = (2.0 / NOISE_PARTIALS as f64).sqrt();
            (0..len)
                .map(|n| {
                    let t = n as f64 / sr;
                    scale * partials.iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum::<f64>()
                })
                .collect()
        }
    }
}

/// Encodes every event of `scene` into the FOA clip seen by `array_id`.
///
/// Array A sits at the origin with the scene's axes. Array B is co-located
/// but rotated by `scene.array_b_rotation`.
pub fn encode_foa(scene: &SceneSpec, array_id: ArrayId) -> Result<FoaClip> {
    scene.validate()?;
    let rotation = match array_id {
        ArrayId::A => None,
        ArrayId::B => Some(rotation_group()[scene.array_b_rotation]),
    };
    let mut clip = FoaClip::silent(scene.n_samples(), scene.sample_rate, array_id);
    for (index, e) in scene.events.iter().enumerate() {
        let mut u = e.direction();
        if let Some(rot) = &rotation {
            u = rot.apply(u);
        }
        let amp = e.gain / e.distance().max(MIN_DISTANCE_M);
        let gains = [amp, amp * u[0], amp * u[1], amp * u[2]];
        let (start, _) = e.sample_span(scene.sample_rate);
        let source = render_source(scene, index);
        for (channel, g) in clip.channels.iter_mut().zip(gains) {
            for (out, s) in channel[start..start + source.len()].iter_mut().zip(&source) {
                *out += s * g;
            }
        }
    }
    Ok(clip)
}

/// Assigns each event to a track: events in onset order (ties by class,
/// then input order) take the lowest-index track free for their whole span.
pub fn assign_tracks(scene: &SceneSpec) -> Result<Vec<usize>> {
    let spans = scene.spans();
    let mut order: Vec<usize> = (0..scene.events.len()).collect();
    order.sort_by(|&a, &b| {
        spans[a].0.cmp(&spans[b].0).then(scene.events[a].class_id.cmp(&scene.events[b].class_id)).then(a.cmp(&b))
    });
    let mut busy: Vec<Vec<(usize, usize)>> = vec![Vec::new(); scene.max_overlap];
    let mut tracks = vec![0; scene.events.len()];
    for i in order {
        let (s, e) = spans[i];
        let track = busy
            .iter()
            .position(|taken| taken.iter().all(|&(ts, te)| e <= ts || te <= s))
            .ok_or(Error::OverlapExceeded {
                time_s: s as f64 / scene.sample_rate as f64,
                active: scene.max_overlap + 1,
                cap: scene.max_overlap,
            })?;
        busy[track].push((s, e));
        tracks[i] = track;
    }
    Ok(tracks)
}

/// Whether a sample span covers at least half of frame `frame`'s hop span.
fn frame_active(span: (usize, usize), frame: usize, hop: usize) -> bool {
    let f0 = frame * hop;
    let f1 = f0 + hop;
    let overlap = span.1.min(f1).saturating_sub(span.0.max(f0));
    2 * overlap >= hop
}

/// Track-wise labels at a hop of `hop_samples`.
pub fn label_frames(scene: &SceneSpec, hop_samples: usize, n_frames: usize) -> Result<Vec<TrackwiseFrame>> {
    if hop_samples == 0 {
        return Err(Error::Config("hop_samples must be positive".into()));
    }
    scene.validate()?;
    let tracks = assign_tracks(scene)?;
    let spans = scene.spans();
    let mut frames = vec![TrackwiseFrame::zeros(scene.max_overlap, scene.classes); n_frames];
    for (i, e) in scene.events.iter().enumerate() {
        let first = spans[i].0 / hop_samples;
        let last = (spans[i].1 / hop_samples + 1).min(n_frames);
        for (f, frame) in frames.iter_mut().enumerate().take(last).skip(first) {
            if frame_active(spans[i], f, hop_samples) {
                frame.set_event(tracks[i], e.class_id, e.direction());
            }
        }
    }
    Ok(frames)
}

/// Reference event instances with full Cartesian positions, one per active
/// (frame, event) pair under the same activity rule as [`label_frames`].
pub fn reference_instances(scene: &SceneSpec, hop_samples: usize, n_frames: usize) -> Result<Vec<EventInstance>> {
    if hop_samples == 0 {
        return Err(Error::Config("hop_samples must be positive".into()));
    }
    let mut out = Vec::new();
    for f in 0..n_frames {
        for e in &scene.events {
            if frame_active(e.sample_span(scene.sample_rate), f, hop_samples) {
                out.push(EventInstance { frame: f, class_id: e.class_id, position: e.position });
            }
        }
    }
    Ok(out)
}

/// Number of label frames covering a clip of `n_samples` at `hop_samples`.
pub fn label_frame_count(n_samples: usize, hop_samples: usize) -> usize {
    n_samples / hop_samples
}

/// Rotates a scene's source positions.
pub fn rotate_scene(scene: &SceneSpec, rot: &RotationElement) -> SceneSpec {
    let mut out = scene.clone();
    for e in &mut out.events {
        e.position = rot.apply(e.position);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(class_id: usize, onset_s: f64, offset_s: f64, position: [f64; 3]) -> SourceEvent {
        SourceEvent {
            class_id,
            onset_s,
            offset_s,
            position,
            signal_kind: SignalKind::for_class(class_id),
            gain: 1.0,
        }
    }

    #[test]
    fn empty_scene_is_silent() {
        let scene = SceneSpec::new(0.5, vec![], 1);
        let clip = encode_foa(&scene, ArrayId::A).unwrap();
        assert_eq!(clip.len(), 16_000);
        assert!(clip.channels.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn on_axis_source_feeds_w_and_x_only() {
        let scene = SceneSpec::new(0.1, vec![event(0, 0.0, 0.1, [1.0, 0.0, 0.0])], 1);
        let clip = encode_foa(&scene, ArrayId::A).unwrap();
        let s = render_source(&scene, 0);
        for n in 0..clip.len() {
            assert_eq!(clip.channels[0][n], s[n]);
            assert_eq!(clip.channels[1][n], s[n]);
            assert_eq!(clip.channels[2][n], 0.0);
            assert_eq!(clip.channels[3][n], 0.0);
        }
    }

    #[test]
    fn close_sources_are_clamped() {
        let scene = SceneSpec::new(0.05, vec![event(0, 0.0, 0.05, [0.0, 0.1, 0.0])], 1);
        let clip = encode_foa(&scene, ArrayId::A).unwrap();
        let s = render_source(&scene, 0);
        for n in 0..clip.len() {
            assert!((clip.channels[0][n] - s[n] / 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_position_rejected() {
        let scene = SceneSpec::new(1.0, vec![event(0, 0.0, 0.5, [0.0; 3])], 1);
        assert!(matches!(encode_foa(&scene, ArrayId::A), Err(Error::ZeroPosition { index: 0 })));
    }

    #[test]
    fn fourth_overlapping_event_rejected_with_time() {
        let events = (0..4).map(|i| event(i, 0.1 * i as f64, 0.9, [1.0, 0.0, 0.0])).collect();
        let scene = SceneSpec::new(1.0, events, 1);
        match encode_foa(&scene, ArrayId::A) {
            Err(Error::OverlapExceeded { time_s, active, cap }) => {
                assert!((time_s - 0.3).abs() < 1e-9);
                assert_eq!((active, cap), (4, 3));
            }
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn back_to_back_events_do_not_overlap() {
        let events = vec![
            event(0, 0.0, 0.5, [1.0, 0.0, 0.0]),
            event(1, 0.0, 0.5, [0.0, 1.0, 0.0]),
            event(2, 0.0, 0.5, [0.0, 0.0, 1.0]),
            event(3, 0.5, 1.0, [1.0, 1.0, 0.0]),
        ];
        let scene = SceneSpec::new(1.0, events, 1);
        scene.validate().unwrap();
        assert_eq!(assign_tracks(&scene).unwrap(), vec![0, 1, 2, 0]);
    }

    #[test]
    fn empty_scene_labels_are_zero() {
        let scene = SceneSpec::new(1.0, vec![], 1);
        let frames = label_frames(&scene, 1600, 20).unwrap();
        assert!(frames.iter().all(|f| f.sed.iter().chain(&f.doa).all(|&v| v == 0.0)));
    }

    #[test]
    fn single_event_lands_on_track_zero_with_unit_direction() {
        let hop = 1600;
        let sr = 32_000.0;
        let scene = SceneSpec::new(
            2.0,
            vec![event(5, 10.0 * hop as f64 / sr, 21.0 * hop as f64 / sr, [0.0, 0.0, 2.0])],
            3,
        );
        let frames = label_frames(&scene, hop, 40).unwrap();
        for (f, frame) in frames.iter().enumerate() {
            frame.validate_label().unwrap();
            if (10..=20).contains(&f) {
                assert_eq!(frame.active_class(0), Some(5));
                assert_eq!(frame.doa_row(0), [0.0, 0.0, 1.0]);
            } else {
                assert!(frame.sed.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn half_frame_overlap_counts_as_active() {
        let span = (800, 5000);
        assert!(frame_active(span, 0, 1600));
        assert!(!frame_active((801, 5000), 0, 1600));
        assert!(frame_active(span, 2, 1600));
        assert!(!frame_active((0, 799), 0, 1600));
    }

    #[test]
    fn scene_round_trips_through_json() {
        let scene = SceneSpec::new(1.0, vec![event(1, 0.1, 0.4, [1.0, 2.0, -0.5])], 99);
        let text = serde_json::to_string(&scene).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), scene);
    }
}
