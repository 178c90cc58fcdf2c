//! The track-wise output format.
//!
//! A frame holds `M` class-agnostic tracks. Each track carries a row of `K`
//! class activations and one Cartesian direction. Labels use one-hot (or
//! all-zero) rows with unit (or zero) directions; predictions use
//! probabilities and unnormalized directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of tracks (maximum polyphony).
pub const DEFAULT_TRACKS: usize = 3;
/// Default number of event classes.
pub const DEFAULT_CLASSES: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackwiseFrame {
    tracks: usize,
    classes: usize,
    /// Row-major `tracks × classes`.
    pub sed: Vec<f64>,
    /// Row-major `tracks × 3`.
    pub doa: Vec<f64>,
}

impl TrackwiseFrame {
    pub fn zeros(tracks: usize, classes: usize) -> Self {
        TrackwiseFrame {
            tracks,
            classes,
            sed: vec![0.0; tracks * classes],
            doa: vec![0.0; tracks * 3],
        }
    }

    pub fn from_parts(tracks: usize, classes: usize, sed: Vec<f64>, doa: Vec<f64>) -> Result<Self> {
        if sed.len() != tracks * classes || doa.len() != tracks * 3 {
            return Err(Error::Shape(format!(
                "frame with {tracks} tracks and {classes} classes needs {} sed and {} doa values, got {} and {}",
                tracks * classes,
                tracks * 3,
                sed.len(),
                doa.len()
            )));
        }
        Ok(TrackwiseFrame { tracks, classes, sed, doa })
    }

    pub fn tracks(&self) -> usize {
        self.tracks
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sed_row(&self, track: usize) -> &[f64] {
        &self.sed[track * self.classes..(track + 1) * self.classes]
    }

    pub fn sed_row_mut(&mut self, track: usize) -> &mut [f64] {
        &mut self.sed[track * self.classes..(track + 1) * self.classes]
    }

    pub fn doa_row(&self, track: usize) -> [f64; 3] {
        let d = &self.doa[track * 3..track * 3 + 3];
        [d[0], d[1], d[2]]
    }

    pub fn set_doa(&mut self, track: usize, v: [f64; 3]) {
        self.doa[track * 3..track * 3 + 3].copy_from_slice(&v);
    }

    /// Writes an active label entry: one-hot `class` and direction `doa`.
    pub fn set_event(&mut self, track: usize, class: usize, doa: [f64; 3]) {
        let row = self.sed_row_mut(track);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[class] = 1.0;
        self.set_doa(track, doa);
    }

    /// Class index of an active label track, if any.
    pub fn active_class(&self, track: usize) -> Option<usize> {
        self.sed_row(track).iter().position(|&v| v > 0.5)
    }

    /// Returns a copy whose track `m` is this frame's track `perm[m]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = TrackwiseFrame::zeros(self.tracks, self.classes);
        for (m, &src) in perm.iter().enumerate() {
            out.sed_row_mut(m).copy_from_slice(self.sed_row(src));
            out.set_doa(m, self.doa_row(src));
        }
        out
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.tracks == other.tracks && self.classes == other.classes
    }

    /// Checks the label invariants: at most one 1 per row, the rest 0, and a
    /// zero direction exactly on inactive rows.
    pub fn validate_label(&self) -> Result<()> {
        for m in 0..self.tracks {
            let row = self.sed_row(m);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones > 1 || ones + zeros != row.len() {
                return Err(Error::Shape(format!("track {m} sed row is not one-hot or zero")));
            }
            let doa_zero = self.doa_row(m).iter().all(|&v| v == 0.0);
            if doa_zero != (ones == 0) {
                return Err(Error::Shape(format!("track {m} direction/activity mismatch")));
            }
        }
        Ok(())
    }
}

/// Checks that a sequence of frames shares one shape and returns it.
pub fn sequence_shape(frames: &[TrackwiseFrame]) -> Result<Option<(usize, usize)>> {
    let Some(first) = frames.first() else { return Ok(None) };
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::Shape("frames disagree on track/class counts".into()));
    }
    Ok(Some((first.tracks(), first.classes())))
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    if n > 0.0 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0; 3]
    }
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permuted_moves_rows() {
        let mut f = TrackwiseFrame::zeros(3, 4);
        f.set_event(0, 2, [1.0, 0.0, 0.0]);
        f.set_event(2, 1, [0.0, 0.0, 1.0]);
        let p = f.permuted(&[2, 0, 1]);
        assert_eq!(p.active_class(0), Some(1));
        assert_eq!(p.active_class(1), Some(2));
        assert_eq!(p.active_class(2), None);
        assert_eq!(p.doa_row(0), [0.0, 0.0, 1.0]);
        p.validate_label().unwrap();
    }

    #[test]
    fn label_validation_rejects_direction_without_activity() {
        let mut f = TrackwiseFrame::zeros(2, 3);
        f.set_doa(1, [0.0, 1.0, 0.0]);
        assert!(f.validate_label().is_err());
    }
}
