//! Concentration-matrix estimation from voltage samples.
//!
//! Two estimators: direct inversion of the sample covariance when samples are
//! plentiful, and the graphical lasso
//!
//! ```text
//! minimize  -log det Θ + <Θ, C> + λ ‖Θ‖₁
//! ```
//!
//! otherwise. The lasso is solved by primal block coordinate descent: each
//! sweep visits every column, solves an ℓ₁-penalized quadratic for its
//! off-diagonal part by coordinate descent, and updates the diagonal entry in
//! closed form. Every column step minimizes the objective over that block, so
//! the objective trace never increases and the iterate stays positive definite.
//!
//! None of the defaults here (λ rule, tolerances, iteration caps) come from
//! the underlying theory; they are engineering choices and can all be changed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::powerflow::{ConcentrationMatrix, VarLabel};
use crate::sampling::SampleSet;

/// Constant in `λ = c·√(ln d / n)`.
pub const DEFAULT_LAMBDA_CONSTANT: f64 = 0.5;

/// `auto` uses direct inversion when `n ≥ AUTO_DIRECT_RATIO · d`.
pub const AUTO_DIRECT_RATIO: usize = 5;

/// Eigenvalues at or below this fraction of the largest count as zero.
pub const PD_RELATIVE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub diagonal_penalized: bool,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        GlassoConfig {
            lambda: 0.0,
            tol: 1e-6,
            max_iters: 500,
            diagonal_penalized: false,
        }
    }
}

impl GlassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        GlassoConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Precondition(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Precondition(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Precondition("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Glasso,
}

/// Why the solver stopped. `MaxIterations` is a warning: the last iterate is
/// still returned and is still positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Which estimator to run on a sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    /// Graphical lasso on the correlation matrix with `λ` from [`select_lambda`].
    Glasso,
    /// Direct when `n ≥ 5d` and the covariance is positive definite, else glasso.
    Auto,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Estimator::Direct),
            "glasso" => Ok(Estimator::Glasso),
            "auto" => Ok(Estimator::Auto),
            other => Err(Error::Parse(format!(
                "unknown estimator '{other}' (expected direct, glasso or auto)"
            ))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Direct => "direct",
            Estimator::Glasso => "glasso",
            Estimator::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedConcentration {
    pub matrix: DMatrix<f64>,
    pub method: Method,
    /// Objective after initialization and after each sweep (glasso only).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub lambda: Option<f64>,
}

impl EstimatedConcentration {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }

    pub fn into_concentration(self, labels: Vec<VarLabel>) -> Result<ConcentrationMatrix> {
        ConcentrationMatrix::new(self.matrix, labels)
    }

    pub fn to_file(&self, labels: &[VarLabel]) -> Result<ConcentrationFile> {
        if labels.len() != self.matrix.nrows() {
            return Err(Error::Precondition(format!(
                "{} labels for a {}x{} matrix",
                labels.len(),
                self.matrix.nrows(),
                self.matrix.ncols()
            )));
        }
        Ok(ConcentrationFile {
            labels: labels.iter().map(ToString::to_string).collect(),
            matrix: self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            method: Some(self.method),
            iterations: Some(self.iterations),
            final_objective: self.final_objective(),
            termination: Some(self.termination),
            lambda: self.lambda,
            samples: None,
        })
    }
}

/// JSON form of a concentration matrix: dense rows plus variable labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationFile {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Number of samples behind an estimate; absent for exact matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl ConcentrationFile {
    pub fn from_concentration(conc: &ConcentrationMatrix) -> Self {
        ConcentrationFile {
            labels: conc.labels().iter().map(ToString::to_string).collect(),
            matrix: conc.matrix().row_iter().map(|r| r.iter().copied().collect()).collect(),
            method: None,
            iterations: None,
            final_objective: None,
            termination: None,
            lambda: None,
            samples: None,
        }
    }

    pub fn to_concentration(&self) -> Result<ConcentrationMatrix> {
        let d = self.labels.len();
        if self.matrix.len() != d || self.matrix.iter().any(|r| r.len() != d) {
            return Err(Error::Parse(format!("concentration matrix must be {d}x{d}")));
        }
        let labels = self
            .labels
            .iter()
            .map(|l| l.parse())
            .collect::<Result<Vec<VarLabel>>>()?;
        let m = DMatrix::from_fn(d, d, |i, j| self.matrix[i][j]);
        ConcentrationMatrix::new(m, labels)
    }
}

/// `(1/n) Σ_k x_k x_kᵀ`, without mean-centring (fluctuations are zero-mean).
pub fn sample_covariance(samples: &SampleSet) -> Result<DMatrix<f64>> {
    covariance_of_rows(&samples.samples)
}

pub fn covariance_of_rows(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 {
        return Err(Error::Precondition(
            "sample covariance needs at least one sample".into(),
        ));
    }
    let mut cov = x.tr_mul(x) / x.nrows() as f64;
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// Direct inverse of a positive definite covariance.
pub fn invert_covariance(cov: &DMatrix<f64>) -> Result<EstimatedConcentration> {
    check_square(cov)?;
    let eig = linalg::symmetric_eigenvalues(cov);
    let largest = eig.last().copied().unwrap_or(0.0).max(0.0);
    let threshold = PD_RELATIVE_EPS * largest;
    let smallest = eig.first().copied().unwrap_or(0.0);
    if smallest.is_nan() || smallest <= threshold || largest == 0.0 {
        return Err(Error::RankDeficient {
            eigenvalue: smallest,
            threshold,
        });
    }
    Ok(EstimatedConcentration {
        matrix: linalg::spd_inverse(cov, "covariance")?,
        method: Method::Direct,
        objective_trace: Vec::new(),
        iterations: 0,
        termination: Termination::Converged,
        lambda: None,
    })
}

fn check_square(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::Precondition(format!(
            "covariance must be a non-empty square matrix, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !linalg::is_symmetric(cov, 1e-10) {
        return Err(Error::Precondition("covariance is not symmetric".into()));
    }
    Ok(())
}

/// `-log det Θ + <Θ, C> + λ‖Θ‖₁`, with the ℓ₁ norm over off-diagonal entries
/// only unless `diagonal_penalized`. Infinite if `Θ` is not positive definite.
pub fn glasso_objective(theta: &DMatrix<f64>, cov: &DMatrix<f64>, config: &GlassoConfig) -> f64 {
    let Some(log_det) = linalg::log_det_spd(theta) else {
        return f64::INFINITY;
    };
    let trace: f64 = theta.component_mul(cov).sum();
    let mut l1 = 0.0;
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            if i != j || config.diagonal_penalized {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    -log_det + trace + config.lambda * l1
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Graphical lasso by primal block coordinate descent.
///
/// Stops when the largest absolute change of any entry of `Θ` over a full
/// sweep is below `tol`, or after `max_iters` sweeps (reported through
/// [`Termination::MaxIterations`], not as an error).
pub fn graphical_lasso(cov: &DMatrix<f64>, config: &GlassoConfig) -> Result<EstimatedConcentration> {
    config.validate()?;
    check_square(cov)?;
    let d = cov.nrows();
    let lambda = config.lambda;
    let diag_pen = if config.diagonal_penalized { lambda } else { 0.0 };
    for i in 0..d {
        if (cov[(i, i)] + diag_pen).is_nan() || cov[(i, i)] + diag_pen <= 0.0 {
            return Err(Error::Precondition(format!(
                "covariance diagonal entry {i} is {:e}; it must be positive",
                cov[(i, i)]
            )));
        }
    }

    let mut theta = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / (cov[(i, i)] + lambda) } else { 0.0 });
    let mut trace = vec![glasso_objective(&theta, cov, config)];
    if d == 1 {
        theta[(0, 0)] = 1.0 / (cov[(0, 0)] + diag_pen);
        trace.push(glasso_objective(&theta, cov, config));
        return Ok(EstimatedConcentration {
            matrix: theta,
            method: Method::Glasso,
            objective_trace: trace,
            iterations: 1,
            termination: Termination::Converged,
            lambda: Some(lambda),
        });
    }

    let inner_tol = config.tol * 0.1;
    let inner_max = 10_000;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let others: Vec<Vec<usize>> = (0..d).map(|j| (0..d).filter(|&k| k != j).collect()).collect();

    for _ in 0..config.max_iters {
        iterations += 1;
        // Recomputed each sweep so rank-one drift cannot accumulate.
        let mut w = linalg::spd_inverse(&theta, "glasso iterate")?;
        let mut max_change = 0.0_f64;

        for j in 0..d {
            let idx = &others[j];
            let m = d - 1;
            let s = cov[(j, j)] + diag_pen;
            // V = Θ₁₁⁻¹ = W₁₁ - w₁₂ w₁₂ᵀ / w₂₂
            let w22 = w[(j, j)];
            let v = DMatrix::from_fn(m, m, |a, b| w[(idx[a], idx[b])] - w[(idx[a], j)] * w[(idx[b], j)] / w22);
            let c = DVector::from_fn(m, |a, _| cov[(idx[a], j)]);
            let mut beta = DVector::from_fn(m, |a, _| theta[(idx[a], j)]);
            let mut vb = &v * &beta;

            for _ in 0..inner_max {
                let mut inner_change = 0.0_f64;
                for k in 0..m {
                    let vkk = v[(k, k)];
                    let partial = c[k] + s * (vb[k] - vkk * beta[k]);
                    let new = -soft_threshold(partial, lambda) / (s * vkk);
                    let delta = new - beta[k];
                    if delta != 0.0 {
                        for a in 0..m {
                            vb[a] += v[(a, k)] * delta;
                        }
                        beta[k] = new;
                        inner_change = inner_change.max(delta.abs());
                    }
                }
                if inner_change < inner_tol {
                    break;
                }
            }
            // Refresh Vβ exactly before using it in the closed-form updates.
            vb = &v * &beta;

            let theta22 = 1.0 / s + beta.dot(&vb);
            max_change = max_change.max((theta22 - theta[(j, j)]).abs());
            theta[(j, j)] = theta22;
            for (a, &i) in idx.iter().enumerate() {
                max_change = max_change.max((beta[a] - theta[(i, j)]).abs());
                theta[(i, j)] = beta[a];
                theta[(j, i)] = beta[a];
            }

            // W = Θ⁻¹ for the updated column.
            w[(j, j)] = s;
            for a in 0..m {
                let val = -s * vb[a];
                w[(idx[a], j)] = val;
                w[(j, idx[a])] = val;
                for b in 0..m {
                    w[(idx[a], idx[b])] = v[(a, b)] + s * vb[a] * vb[b];
                }
            }
        }

        trace.push(glasso_objective(&theta, cov, config));
        if max_change < config.tol {
            termination = Termination::Converged;
            break;
        }
    }

    linalg::symmetrize(&mut theta);
    Ok(EstimatedConcentration {
        matrix: theta,
        method: Method::Glasso,
        objective_trace: trace,
        iterations,
        termination,
        lambda: Some(lambda),
    })
}

/// Runs the graphical lasso on the correlation matrix `D^{-1/2} C D^{-1/2}`
/// and maps the result back with `D^{-1/2} Θ D^{-1/2}`. This makes a single
/// `λ` meaningful regardless of the scale of each variable.
pub fn graphical_lasso_standardized(cov: &DMatrix<f64>, config: &GlassoConfig) -> Result<EstimatedConcentration> {
    check_square(cov)?;
    let d: Vec<f64> = cov
        .diagonal()
        .iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(1.0 / v.sqrt())
            } else {
                Err(Error::Precondition(format!("non-positive variance {v:e}")))
            }
        })
        .collect::<Result<_>>()?;
    let corr = linalg::scale_symmetric(cov, &d);
    let mut est = graphical_lasso(&corr, config)?;
    est.matrix = linalg::scale_symmetric(&est.matrix, &d);
    Ok(est)
}

/// `λ = c·√(ln d / n)` with `c = 0.5`.
pub fn select_lambda(n: usize, d: usize) -> Result<f64> {
    select_lambda_with(n, d, DEFAULT_LAMBDA_CONSTANT)
}

pub fn select_lambda_with(n: usize, d: usize, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Precondition(format!("lambda selection needs n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(Error::Precondition("dimension must be positive".into()));
    }
    Ok(c * ((d as f64).ln() / n as f64).sqrt())
}

/// Extended BIC of a fitted concentration:
/// `n·(-log det Θ + <Θ, C>) + |E| ln n + 4 γ |E| ln d`, where `|E|` counts
/// nonzero upper off-diagonal entries.
pub fn ebic(theta: &DMatrix<f64>, cov: &DMatrix<f64>, n: usize, gamma: f64) -> f64 {
    let d = theta.nrows();
    let unpenalized = glasso_objective(theta, cov, &GlassoConfig::default());
    let edges = (0..d)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .filter(|&(i, j)| theta[(i, j)] != 0.0)
        .count() as f64;
    n as f64 * unpenalized + edges * (n as f64).ln() + 4.0 * gamma * edges * (d as f64).ln()
}

/// Fits the standardized graphical lasso for each `λ` in `lambdas` (in
/// parallel) and returns the one with the lowest EBIC. Ties go to the
/// earlier grid entry.
pub fn select_lambda_ebic(
    cov: &DMatrix<f64>,
    n: usize,
    lambdas: &[f64],
    gamma: f64,
    base: &GlassoConfig,
) -> Result<(f64, EstimatedConcentration)> {
    if lambdas.is_empty() {
        return Err(Error::Precondition("lambda grid is empty".into()));
    }
    let fits = lambdas
        .par_iter()
        .map(|&lambda| {
            let est = graphical_lasso_standardized(cov, &GlassoConfig { lambda, ..*base })?;
            let score = ebic(&est.matrix, cov, n, gamma);
            Ok((lambda, est, score))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.2 < a.2 { b } else { a })
        .expect("non-empty grid");
    Ok((best.0, best.1))
}

/// Estimates the concentration from a covariance built from `n` samples.
pub fn estimate_from_covariance(
    cov: &DMatrix<f64>,
    n: usize,
    estimator: Estimator,
    base: &GlassoConfig,
) -> Result<EstimatedConcentration> {
    let d = cov.nrows();
    let glasso = || {
        let lambda = select_lambda(n.max(2), d)?;
        graphical_lasso_standardized(cov, &GlassoConfig { lambda, ..*base })
    };
    match estimator {
        Estimator::Direct => invert_covariance(cov),
        Estimator::Glasso => glasso(),
        Estimator::Auto => {
            if n >= AUTO_DIRECT_RATIO * d {
                match invert_covariance(cov) {
                    Ok(est) => return Ok(est),
                    Err(Error::RankDeficient { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            glasso()
        }
    }
}

pub fn estimate(samples: &SampleSet, estimator: Estimator, base: &GlassoConfig) -> Result<EstimatedConcentration> {
    estimate_from_covariance(&sample_covariance(samples)?, samples.len(), estimator, base)
}
