//! Thresholding of track-wise outputs into discrete events.

use serde::{Deserialize, Serialize};

use crate::metrics::EventInstance;
use crate::track::{normalize, TrackwiseFrame};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub frame: usize,
    pub track: usize,
    pub class_id: usize,
    /// Unit direction, or zero when the network emitted a zero vector.
    pub doa: [f64; 3],
}

/// Per track and frame, emits the highest-probability class (lowest index
/// on ties) when its probability is at least `threshold`.
pub fn binarize(pred: &[TrackwiseFrame], threshold: f64) -> Vec<DetectedEvent> {
    let mut out = Vec::new();
    for (frame, f) in pred.iter().enumerate() {
        for track in 0..f.tracks() {
            let row = f.sed_row(track);
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            if !row.is_empty() && row[best] >= threshold {
                out.push(DetectedEvent { frame, track, class_id: best, doa: normalize(f.doa_row(track)) });
            }
        }
    }
    out
}

pub fn to_instances(events: &[DetectedEvent]) -> Vec<EventInstance> {
    events.iter().map(|e| EventInstance { frame: e.frame, class_id: e.class_id, position: e.doa }).collect()
}
