//! Thresholding: a bus pair is an edge when its score is at most `τ₂ < 0`.
//! The DC score is the concentration entry; the LC score is
//! `J_vv(i, j) + J_θθ(i, j)`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Algorithm, LearnedTopology};
use crate::error::{Error, Result};
use crate::linalg;
use crate::powerflow::{ConcentrationMatrix, ModelKind, VarKind};

/// Relative factor for thresholds on exact (analytical) matrices.
pub const EXACT_RELATIVE_THRESHOLD: f64 = 1e-4;

/// Family-wise false-alarm rate of [`noise_floor_threshold`] over all
/// off-diagonal entries of one matrix.
pub const NOISE_FLOOR_ALPHA: f64 = 1e-3;

/// `N×N` per-bus-pair scores.
pub fn edge_scores(conc: &ConcentrationMatrix) -> Result<DMatrix<f64>> {
    match conc.model() {
        ModelKind::Dc => Ok(conc.matrix().clone()),
        ModelKind::Lc => Ok(conc.block(VarKind::V, VarKind::V)? + conc.block(VarKind::Theta, VarKind::Theta)?),
    }
}

/// Scores rescaled to unit diagonal, `T(i, j) / √(T(i, i) T(j, j))`. Signs
/// and zeros are unchanged, so exact-matrix decisions at `τ₂ → 0⁻` agree
/// with the raw scores; for estimates it puts all pairs on one scale.
pub fn standardized_edge_scores(conc: &ConcentrationMatrix) -> Result<DMatrix<f64>> {
    linalg::unit_diagonal(&edge_scores(conc)?)
}

/// `factor · max |off-diagonal|`.
pub fn relative_threshold(m: &DMatrix<f64>, factor: f64) -> f64 {
    factor * linalg::max_abs_off_diagonal(m)
}

/// `z / √n` for a `dim × dim` unit-diagonal estimate from `n` samples.
///
/// A zero entry of such an estimate is roughly `N(0, 1/n)`, so
/// `z = Φ⁻¹(1 − α / (2m))` over the `m = dim (dim − 1) / 2` entries keeps the
/// chance that any of them crosses the threshold near `alpha`. Larger
/// matrices get a higher floor.
pub fn noise_floor_threshold(n: usize, dim: usize, alpha: f64) -> f64 {
    let entries = (dim * dim.saturating_sub(1) / 2).max(1) as f64;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * entries));
    z / (n.max(1) as f64).sqrt()
}

/// Threshold at the largest multiplicative gap between consecutive sorted
/// nonzero `|off-diagonal|` values (geometric mean of the gap's ends).
/// `None` with fewer than two distinct nonzero magnitudes.
pub fn largest_gap_threshold(m: &DMatrix<f64>) -> Option<f64> {
    let mut values: Vec<f64> = (0..m.ncols())
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .map(|(i, j)| m[(i, j)].abs())
        .filter(|v| *v > 0.0)
        .collect();
    values.sort_by(f64::total_cmp);
    values
        .windows(2)
        .filter(|w| w[1] > w[0])
        .max_by(|a, b| (a[1] / a[0]).total_cmp(&(b[1] / b[0])))
        .map(|w| (w[0] * w[1]).sqrt())
}

/// Thresholds the raw scores of `conc`.
pub fn learn_by_thresholding(conc: &ConcentrationMatrix, tau2: f64) -> Result<LearnedTopology> {
    learn_from_scores(&edge_scores(conc)?, conc.buses(), tau2)
}

/// Thresholds unit-diagonal scores; `tau2` is on the correlation scale.
pub fn learn_by_thresholding_standardized(conc: &ConcentrationMatrix, tau2: f64) -> Result<LearnedTopology> {
    learn_from_scores(&standardized_edge_scores(conc)?, conc.buses(), tau2)
}

/// Edge `(i, j)` iff `scores(i, j) ≤ τ₂`.
pub fn learn_from_scores(scores: &DMatrix<f64>, buses: Vec<usize>, tau2: f64) -> Result<LearnedTopology> {
    if tau2.is_nan() || tau2 >= 0.0 {
        return Err(Error::Precondition(format!("tau2 must be < 0, got {tau2}")));
    }
    if scores.nrows() != buses.len() || !scores.is_square() {
        return Err(Error::Precondition(format!(
            "{}x{} scores for {} buses",
            scores.nrows(),
            scores.ncols(),
            buses.len()
        )));
    }
    let mut edges = BTreeSet::new();
    for j in 0..buses.len() {
        for i in 0..j {
            if scores[(i, j)] <= tau2 {
                edges.insert((buses[i].min(buses[j]), buses[i].max(buses[j])));
            }
        }
    }
    Ok(LearnedTopology::new(buses, edges, Algorithm::Thresholding, tau2))
}
