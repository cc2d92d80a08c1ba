//! Joint recovery of topology and line susceptances when the active-injection
//! variances are known.
//!
//! Since `Σ_θ⁻¹ = H Σ_p⁻¹ H` with `H` positive definite,
//! `Σ_p^{-1/2} Σ_θ⁻¹ Σ_p^{-1/2} = (Σ_p^{-1/2} H Σ_p^{-1/2})²`, and the unique
//! positive definite square root gives `H` back.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Off-diagonal entries with `|Ĥ(i, j)|` at or below this fraction of
/// `max |Ĥ|` are treated as zero.
pub const PARAMETER_ZERO_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    /// Estimate of the reduced susceptance Laplacian.
    pub h_beta: DMatrix<f64>,
    /// `(i, j) → β̂_ij = -Ĥ(i, j)` over matrix indices with `i < j`.
    pub susceptances: BTreeMap<(usize, usize), f64>,
}

impl ParameterEstimate {
    /// Susceptances keyed by bus id, given the bus of each matrix row.
    pub fn bus_susceptances(&self, buses: &[usize]) -> BTreeMap<(usize, usize), f64> {
        self.susceptances
            .iter()
            .map(|(&(i, j), &b)| ((buses[i].min(buses[j]), buses[i].max(buses[j])), b))
            .collect()
    }
}

/// `Ĥ = Σ_p^{1/2} √(Σ_p^{-1/2} Σ_θ⁻¹ Σ_p^{-1/2}) Σ_p^{1/2}`.
pub fn learn_parameters(phase_cov: &DMatrix<f64>, sigma_p: &[f64]) -> Result<ParameterEstimate> {
    let d = phase_cov.nrows();
    if !phase_cov.is_square() || sigma_p.len() != d {
        return Err(Error::Precondition(format!(
            "{}x{} phase covariance with {} injection variances",
            phase_cov.nrows(),
            phase_cov.ncols(),
            sigma_p.len()
        )));
    }
    if let Some((i, v)) = sigma_p.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
        return Err(Error::Precondition(format!(
            "injection variance {i} is {v}; must be > 0"
        )));
    }
    let concentration = linalg::spd_inverse(phase_cov, "phase covariance")?;
    let inv_root: Vec<f64> = sigma_p.iter().map(|s| 1.0 / s.sqrt()).collect();
    let root: Vec<f64> = sigma_p.iter().map(|s| s.sqrt()).collect();
    let mut m = linalg::scale_symmetric(&concentration, &inv_root);
    linalg::symmetrize(&mut m);
    let h = linalg::scale_symmetric(&linalg::spd_sqrt(&m)?, &root);

    let cutoff = PARAMETER_ZERO_RTOL * linalg::max_abs(&h);
    let mut susceptances = BTreeMap::new();
    for j in 0..d {
        for i in 0..j {
            if h[(i, j)].abs() > cutoff {
                susceptances.insert((i, j), -h[(i, j)]);
            }
        }
    }
    Ok(ParameterEstimate {
        h_beta: h,
        susceptances,
    })
}
