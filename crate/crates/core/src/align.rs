//! Exhaustive alignment search over token-grid rotations, used to check
//! equivariance statements of the form `f(S x) = S^r f(x)` for some `r`.

use serde::{Deserialize, Serialize};

use crate::numerics::OffsetVector;
use crate::tokenizer::TokenMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Rotation applied to the reference (`shift_rows` offset).
    pub offset: Vec<usize>,
    /// Max-abs difference remaining at that rotation.
    pub divergence: f64,
}

/// Rotations of `reference` by per-axis multiples of `stride`, keeping the one
/// closest to `candidate`. Grids that differ give an infinite divergence.
pub fn best_alignment(reference: &TokenMatrix, candidate: &TokenMatrix, stride: usize) -> Alignment {
    let mut best = Alignment { offset: Vec::new(), divergence: f64::INFINITY };
    if reference.grid() != candidate.grid() || reference.dim() != candidate.dim() || stride == 0 {
        return best;
    }
    for offset in rotations(reference.grid(), stride) {
        let rotated = reference.shift_rows(&OffsetVector::from(offset.as_slice())).expect("rotation rank matches grid");
        let d = rotated.max_abs_diff(candidate);
        if d < best.divergence {
            best = Alignment { offset, divergence: d };
            if d == 0.0 {
                break;
            }
        }
    }
    best
}

/// All per-axis offsets `k * stride` below each axis length, row-major.
pub fn rotations(grid: &[usize], stride: usize) -> Vec<Vec<usize>> {
    grid.iter().fold(vec![Vec::new()], |acc, &n| {
        acc.into_iter()
            .flat_map(|prefix| {
                (0..n).step_by(stride).map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect()
    })
}
