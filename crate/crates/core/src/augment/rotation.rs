//! The 48 signed axis permutations acting on FOA directional channels.

use serde::{Deserialize, Serialize};

use crate::scene::FoaClip;
use crate::track::TrackwiseFrame;

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// A 3×3 signed permutation matrix.
///
/// Row `i` has its single nonzero entry `sign[i]` in column `source[i]`, so
/// `(R v)[i] = sign[i] · v[source[i]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationElement {
    pub source: [usize; 3],
    pub sign: [i8; 3],
}

impl RotationElement {
    pub const IDENTITY: RotationElement = RotationElement { source: [0, 1, 2], sign: [1, 1, 1] };

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][self.source[i]] = self.sign[i] as f64;
        }
        m
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.sign[i] as f64 * v[self.source[i]])
    }

    pub fn determinant(&self) -> i32 {
        let inversions = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .filter(|&(i, j)| self.source[i] > self.source[j])
            .count();
        let parity = if inversions % 2 == 0 { 1 } else { -1 };
        parity * self.sign.iter().map(|&s| s as i32).product::<i32>()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RotationElement) -> RotationElement {
        RotationElement {
            source: std::array::from_fn(|i| other.source[self.source[i]]),
            sign: std::array::from_fn(|i| self.sign[i] * other.sign[self.source[i]]),
        }
    }

    pub fn inverse(&self) -> RotationElement {
        let mut out = RotationElement::IDENTITY;
        for i in 0..3 {
            out.source[self.source[i]] = i;
            out.sign[self.source[i]] = self.sign[i];
        }
        out
    }

    /// Position of this element in [`rotation_group`].
    pub fn index(&self) -> usize {
        let p = PERMUTATIONS.iter().position(|p| *p == self.source).expect("valid permutation");
        let bits = (0..3).filter(|&i| self.sign[i] < 0).fold(0, |acc, i| acc | (1 << i));
        p * 8 + bits
    }
}

/// All 48 elements: permutations in lexicographic order, then sign patterns
/// with bit `i` negating row `i`. Element 0 is the identity.
pub fn rotation_group() -> Vec<RotationElement> {
    PERMUTATIONS
        .iter()
        .flat_map(|&source| {
            (0..8u8).map(move |bits| RotationElement {
                source,
                sign: std::array::from_fn(|i| if bits >> i & 1 == 1 { -1 } else { 1 }),
            })
        })
        .collect()
}

/// Swaps and negates the X/Y/Z channels; W is untouched.
pub fn rotate_foa(clip: &FoaClip, rot: &RotationElement) -> FoaClip {
    let mut out = clip.clone();
    for i in 0..3 {
        let src = &clip.channels[1 + rot.source[i]];
        out.channels[1 + i] = if rot.sign[i] < 0 { src.iter().map(|v| -v).collect() } else { src.clone() };
    }
    out
}

/// Rotates every direction in a label sequence; class rows are unchanged.
pub fn rotate_labels(labels: &[TrackwiseFrame], rot: &RotationElement) -> Vec<TrackwiseFrame> {
    labels
        .iter()
        .map(|f| {
            let mut out = f.clone();
            for m in 0..f.tracks() {
                out.set_doa(m, rot.apply(f.doa_row(m)));
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
    }

    #[test]
    fn group_has_48_elements_split_by_determinant() {
        let g = rotation_group();
        assert_eq!(g.len(), 48);
        assert_eq!(g.iter().filter(|r| r.determinant() == 1).count(), 24);
        assert_eq!(g.iter().filter(|r| r.determinant() == -1).count(), 24);
        assert_eq!(g[0], RotationElement::IDENTITY);
        for (i, r) in g.iter().enumerate() {
            assert_eq!(r.index(), i);
        }
    }

    #[test]
    fn closure_and_inverses_by_matrix_product() {
        let g = rotation_group();
        let mats: Vec<_> = g.iter().map(|r| r.matrix()).collect();
        let eye = RotationElement::IDENTITY.matrix();
        for (a, ra) in g.iter().enumerate() {
            for (b, rb) in g.iter().enumerate() {
                let prod = matmul(mats[a], mats[b]);
                assert!(mats.contains(&prod));
                assert_eq!(ra.compose(rb).matrix(), prod);
            }
            assert_eq!(matmul(mats[a], ra.inverse().matrix()), eye);
        }
    }

    #[test]
    fn quarter_turn_about_z_is_element_17() {
        let r = rotation_group()[17];
        assert_eq!(r.matrix(), [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0]);
        assert_eq!(r.apply([0.0, 1.0, 0.0]), [-1.0, 0.0, 0.0]);
    }
}
