//! Dense helpers shared by the numerical modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; grids are at most a few
//! hundred buses so dense factorizations are fine.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute off-diagonal entry of a square matrix.
pub fn max_abs_off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    best
}

/// `max |a - b| / max(max |b|, tiny)`.
pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    let scale = max_abs(b).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
        / scale
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    for j in 0..m.ncols() {
        for i in 0..j {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Replace `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    Some(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Unique symmetric positive definite square root via eigendecomposition.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v <= 1e-14 * scale) {
        return Err(Error::Precondition(format!(
            "matrix is not positive definite (eigenvalue {bad:e})"
        )));
    }
    let roots = eig.eigenvalues.map(f64::sqrt);
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `diag(d) * m * diag(d)`.
pub fn scale_symmetric(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * d[j])
}

/// Rescale to unit diagonal. Preserves the zero pattern and the sign of every entry.
pub fn unit_diagonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m
        .diagonal()
        .iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(1.0 / v.sqrt())
            } else {
                Err(Error::Precondition(format!("non-positive diagonal entry {v:e}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scale_symmetric(m, &d))
}
