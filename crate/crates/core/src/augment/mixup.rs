//! Convex combination of two samples with union-of-events labels.

use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::scene::FoaClip;
use crate::track::TrackwiseFrame;

/// Anything that can be blended elementwise.
pub trait Mixable: Sized {
    fn mix(&self, other: &Self, lambda: f64) -> Result<Self>;
}

fn blend(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect()
}

impl Mixable for FoaClip {
    fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if self.len() != other.len() || self.sample_rate != other.sample_rate {
            return Err(Error::Shape("mixup clips differ in length or rate".into()));
        }
        let mut out = self.clone();
        for (o, (a, b)) in out.channels.iter_mut().zip(self.channels.iter().zip(&other.channels)) {
            *o = blend(a, b, lambda);
        }
        Ok(out)
    }
}

impl Mixable for FeatureTensor {
    fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::Shape("mixup features differ in shape".into()));
        }
        let mut out = self.clone();
        out.data = blend(&self.data, &other.data, lambda);
        Ok(out)
    }
}

/// A labelled event recovered from a track-wise label sequence: a maximal
/// run of frames where one track carries the same class and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEvent {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
    pub doa: [f64; 3],
}

pub fn label_events(labels: &[TrackwiseFrame]) -> Vec<LabelEvent> {
    let Some(first) = labels.first() else { return Vec::new() };
    let mut events = Vec::new();
    for m in 0..first.tracks() {
        let mut open: Option<LabelEvent> = None;
        for (t, frame) in labels.iter().enumerate() {
            let here = frame.active_class(m).map(|k| (k, frame.doa_row(m)));
            match (&mut open, here) {
                (Some(ev), Some((k, d))) if ev.class_id == k && ev.doa == d => ev.end = t + 1,
                (_, here) => {
                    if let Some(ev) = open.take() {
                        events.push(ev);
                    }
                    open = here.map(|(class_id, doa)| LabelEvent { start: t, end: t + 1, class_id, doa });
                }
            }
        }
        events.extend(open);
    }
    events
}

/// Packs events onto the lowest free track in onset order (ties by class,
/// then input order).
pub fn pack_events(events: &[LabelEvent], n_frames: usize, tracks: usize, classes: usize) -> Result<Vec<TrackwiseFrame>> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].start, events[i].class_id, i));
    let mut busy_until = vec![vec![false; n_frames]; tracks];
    let mut frames = vec![TrackwiseFrame::zeros(tracks, classes); n_frames];
    for i in order {
        let ev = &events[i];
        let track = (0..tracks).find(|&m| busy_until[m][ev.start..ev.end].iter().all(|b| !b));
        let Some(track) = track else {
            let active = events.iter().filter(|e| e.start <= ev.start && ev.start < e.end).count();
            return Err(Error::MixupRejected { frame: ev.start, active, cap: tracks });
        };
        for t in ev.start..ev.end {
            busy_until[track][t] = true;
            frames[t].set_event(track, ev.class_id, ev.doa);
        }
    }
    Ok(frames)
}

/// Union of the events of two label sequences, re-packed onto tracks.
pub fn mix_labels(a: &[TrackwiseFrame], b: &[TrackwiseFrame]) -> Result<Vec<TrackwiseFrame>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("label lengths {} and {} differ", a.len(), b.len())));
    }
    let Some(first) = a.first() else { return Ok(Vec::new()) };
    if b.iter().chain(a).any(|f| !f.same_shape(first)) {
        return Err(Error::Shape("label frames differ in shape".into()));
    }
    let tracks = first.tracks();
    for (t, (fa, fb)) in a.iter().zip(b).enumerate() {
        let active = (0..tracks).filter(|&m| fa.active_class(m).is_some()).count()
            + (0..tracks).filter(|&m| fb.active_class(m).is_some()).count();
        if active > tracks {
            return Err(Error::MixupRejected { frame: t, active, cap: tracks });
        }
    }
    let mut events = label_events(a);
    events.extend(label_events(b));
    pack_events(&events, a.len(), tracks, first.classes())
}

/// `λ·a + (1−λ)·b` with union labels. The endpoints return one input
/// unchanged.
pub fn mixup<T: Mixable + Clone>(
    a: &T,
    labels_a: &[TrackwiseFrame],
    b: &T,
    labels_b: &[TrackwiseFrame],
    lambda: f64,
) -> Result<(T, Vec<TrackwiseFrame>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixup weight {lambda} outside [0, 1]")));
    }
    let mixed = a.mix(b, lambda)?;
    let labels = mix_labels(labels_a, labels_b)?;
    if lambda == 1.0 {
        return Ok((a.clone(), labels_a.to_vec()));
    }
    if lambda == 0.0 {
        return Ok((b.clone(), labels_b.to_vec()));
    }
    Ok((mixed, labels))
}
