//! Analytical voltage covariances and concentration matrices under the
//! DC and linear-coupled (LC) power flow models.
//!
//! DC: `p = H_β θ`, so `Σ_θ = H_β⁻¹ Σ_p H_β⁻¹` and `Σ_θ⁻¹ = H_β Σ_p⁻¹ H_β`.
//!
//! LC: `[v; θ] = S⁻¹ [p; q]` with `S = [[H_g, H_β], [H_β, -H_g]]`, so
//! `Σ_(v,θ) = S⁻¹ Σ_(p,q) S⁻¹` and the concentration is `S Σ_(p,q)⁻¹ S`,
//! assembled block by block from diagonal injection statistics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reduced_laplacian, Grid, WeightKind, WeightedReducedLaplacian};
use crate::linalg;

/// Relative agreement required between the two DC concentration routes.
pub const DC_ROUTE_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dc,
    Lc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dc => "dc",
            ModelKind::Lc => "lc",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(ModelKind::Dc),
            "lc" => Ok(ModelKind::Lc),
            other => Err(Error::Parse(format!("unknown model '{other}' (expected dc or lc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Voltage magnitude deviation.
    V,
    /// Phase angle.
    Theta,
}

/// A voltage variable: `(bus, kind)`. Displays as `v_<bus>` or `theta_<bus>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarLabel {
    pub bus: usize,
    pub kind: VarKind,
}

impl fmt::Display for VarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::V => write!(f, "v_{}", self.bus),
            VarKind::Theta => write!(f, "theta_{}", self.bus),
        }
    }
}

impl FromStr for VarLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = if let Some(rest) = s.strip_prefix("theta_") {
            (VarKind::Theta, rest)
        } else if let Some(rest) = s.strip_prefix("v_") {
            (VarKind::V, rest)
        } else {
            return Err(Error::Parse(format!("bad variable label '{s}'")));
        };
        let bus = rest
            .parse()
            .map_err(|_| Error::Parse(format!("bad bus id in label '{s}'")))?;
        Ok(VarLabel { bus, kind })
    }
}

/// Canonical variable order: DC is `θ` per bus; LC is all `v` then all `θ`.
pub fn variable_labels(buses: &[usize], model: ModelKind) -> Vec<VarLabel> {
    let theta = buses.iter().map(|&bus| VarLabel {
        bus,
        kind: VarKind::Theta,
    });
    match model {
        ModelKind::Dc => theta.collect(),
        ModelKind::Lc => buses
            .iter()
            .map(|&bus| VarLabel { bus, kind: VarKind::V })
            .chain(theta)
            .collect(),
    }
}

/// Per-bus variances and covariance of active/reactive injection fluctuations,
/// one entry per non-reference bus in matrix-row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionStats {
    sigma_pp: Vec<f64>,
    sigma_qq: Vec<f64>,
    sigma_pq: Vec<f64>,
}

impl InjectionStats {
    pub fn new(sigma_pp: Vec<f64>, sigma_qq: Vec<f64>, sigma_pq: Vec<f64>) -> Result<Self> {
        if sigma_pp.len() != sigma_qq.len() || sigma_pp.len() != sigma_pq.len() {
            return Err(Error::Precondition(format!(
                "injection statistic lengths differ: {} / {} / {}",
                sigma_pp.len(),
                sigma_qq.len(),
                sigma_pq.len()
            )));
        }
        let stats = InjectionStats {
            sigma_pp,
            sigma_qq,
            sigma_pq,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn uniform(n: usize, pp: f64, qq: f64, pq: f64) -> Result<Self> {
        InjectionStats::new(vec![pp; n], vec![qq; n], vec![pq; n])
    }

    /// Checks that every nodal 2×2 block is positive definite.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.len() {
            let (pp, qq, pq) = (self.sigma_pp[i], self.sigma_qq[i], self.sigma_pq[i]);
            let bad = |reason: String| Err(Error::InvalidStats { index: i, reason });
            if !(pp.is_finite() && qq.is_finite() && pq.is_finite()) {
                return bad("non-finite value".into());
            }
            if pp <= 0.0 || qq <= 0.0 {
                return bad(format!("variances must be positive (pp={pp}, qq={qq})"));
            }
            if pp * qq - pq * pq <= 0.0 {
                return bad(format!(
                    "degenerate (p, q) block: pp*qq - pq^2 = {:e}",
                    pp * qq - pq * pq
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sigma_pp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_pp.is_empty()
    }

    pub fn sigma_pp(&self) -> &[f64] {
        &self.sigma_pp
    }

    pub fn sigma_qq(&self) -> &[f64] {
        &self.sigma_qq
    }

    pub fn sigma_pq(&self) -> &[f64] {
        &self.sigma_pq
    }

    /// Determinant of the nodal `(p, q)` block.
    pub fn block_det(&self, i: usize) -> f64 {
        (self.sigma_pp[i] * self.sigma_qq[i] - self.sigma_pq[i] * self.sigma_pq[i]).abs()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let s = |v: &Vec<f64>| v.iter().map(|x| x * factor).collect();
        InjectionStats::new(s(&self.sigma_pp), s(&self.sigma_qq), s(&self.sigma_pq))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "injection statistics cover {} buses, model has {n}",
                self.len()
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DcModel {
    pub h_beta: WeightedReducedLaplacian,
}

impl DcModel {
    pub fn new(grid: &Grid) -> Result<Self> {
        Ok(DcModel {
            h_beta: reduced_laplacian(grid, WeightKind::Susceptance)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_beta.dim()
    }

    pub fn buses(&self) -> &[usize] {
        &self.h_beta.buses
    }
}

#[derive(Debug, Clone)]
pub struct LcModel {
    pub h_g: WeightedReducedLaplacian,
    pub h_beta: WeightedReducedLaplacian,
    /// `[[H_g, H_β], [H_β, -H_g]]`.
    pub system: DMatrix<f64>,
}

impl LcModel {
    pub fn new(grid: &Grid) -> Result<Self> {
        let h_g = reduced_laplacian(grid, WeightKind::Conductance)?;
        let h_beta = reduced_laplacian(grid, WeightKind::Susceptance)?;
        let n = h_g.dim();
        let mut system = DMatrix::zeros(2 * n, 2 * n);
        system.view_mut((0, 0), (n, n)).copy_from(&h_g.matrix);
        system.view_mut((0, n), (n, n)).copy_from(&h_beta.matrix);
        system.view_mut((n, 0), (n, n)).copy_from(&h_beta.matrix);
        system.view_mut((n, n), (n, n)).copy_from(&(-&h_g.matrix));
        Ok(LcModel { h_g, h_beta, system })
    }

    pub fn dim(&self) -> usize {
        self.h_g.dim()
    }

    pub fn buses(&self) -> &[usize] {
        &self.h_beta.buses
    }
}

/// Inverse covariance of voltage variables, with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<VarLabel>,
    model: ModelKind,
}

impl ConcentrationMatrix {
    /// Labels must follow the canonical order of [`variable_labels`].
    pub fn new(matrix: DMatrix<f64>, labels: Vec<VarLabel>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != labels.len() {
            return Err(Error::Precondition(format!(
                "matrix is {}x{} but {} labels were given",
                matrix.nrows(),
                matrix.ncols(),
                labels.len()
            )));
        }
        if !linalg::is_symmetric(&matrix, 1e-8) {
            return Err(Error::Precondition("concentration matrix is not symmetric".into()));
        }
        let model = if labels.iter().any(|l| l.kind == VarKind::V) {
            ModelKind::Lc
        } else {
            ModelKind::Dc
        };
        let buses: Vec<usize> = match model {
            ModelKind::Dc => labels.iter().map(|l| l.bus).collect(),
            ModelKind::Lc => labels[..labels.len() / 2].iter().map(|l| l.bus).collect(),
        };
        if variable_labels(&buses, model) != labels {
            return Err(Error::Precondition(
                "labels are not in canonical order (θ per bus for DC; all v then all θ for LC)".into(),
            ));
        }
        Ok(ConcentrationMatrix { matrix, labels, model })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn labels(&self) -> &[VarLabel] {
        &self.labels
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// Number of buses `N` (the matrix is `N×N` for DC, `2N×2N` for LC).
    pub fn bus_count(&self) -> usize {
        match self.model {
            ModelKind::Dc => self.labels.len(),
            ModelKind::Lc => self.labels.len() / 2,
        }
    }

    pub fn buses(&self) -> Vec<usize> {
        self.labels[..self.bus_count()].iter().map(|l| l.bus).collect()
    }

    /// One `N×N` block of an LC matrix; for DC only `(Theta, Theta)` exists.
    pub fn block(&self, rows: VarKind, cols: VarKind) -> Result<DMatrix<f64>> {
        let n = self.bus_count();
        let offset = |k: VarKind| match (self.model, k) {
            (ModelKind::Dc, VarKind::Theta) => Ok(0),
            (ModelKind::Dc, VarKind::V) => Err(Error::Misuse("DC concentration has no voltage-magnitude block".into())),
            (ModelKind::Lc, VarKind::V) => Ok(0),
            (ModelKind::Lc, VarKind::Theta) => Ok(n),
        };
        let (r, c) = (offset(rows)?, offset(cols)?);
        Ok(self.matrix.view((r, c), (n, n)).into_owned())
    }

    /// Unit-diagonal rescaling `D^{-1/2} K D^{-1/2}`; zero pattern and signs are unchanged.
    pub fn standardized(&self) -> Result<Self> {
        Ok(ConcentrationMatrix {
            matrix: linalg::unit_diagonal(&self.matrix)?,
            labels: self.labels.clone(),
            model: self.model,
        })
    }
}

fn sigma_p_matrix(stats: &InjectionStats) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(stats.sigma_pp()))
}

/// `Σ_θ = H_β⁻¹ Σ_p H_β⁻¹`.
pub fn dc_phase_covariance(model: &DcModel, stats: &InjectionStats) -> Result<DMatrix<f64>> {
    stats.check_dim(model.dim())?;
    let h_inv = linalg::spd_inverse(&model.h_beta.matrix, "H_beta")?;
    let mut cov = &h_inv * sigma_p_matrix(stats) * &h_inv;
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// Per-entry closed form of `H_β Σ_p⁻¹ H_β`, reading `β_ij = -H(i,j)` and
/// `β_i = H(i,i)` (so `β_i` counts any line to the reference).
pub(crate) fn dc_concentration_closed_form(h: &DMatrix<f64>, sigma_p: &[f64]) -> DMatrix<f64> {
    let n = h.nrows();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&k| k != i && h[(i, k)] != 0.0).collect())
        .collect();
    let beta = |i: usize, j: usize| -h[(i, j)];
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = h[(i, i)].powi(2) / sigma_p[i]
            + neighbors[i]
                .iter()
                .map(|&k| beta(i, k).powi(2) / sigma_p[k])
                .sum::<f64>();
        for j in (i + 1)..n {
            let mut value: f64 = neighbors[i]
                .iter()
                .filter(|&&k| k != j && h[(j, k)] != 0.0)
                .map(|&k| beta(i, k) * beta(j, k) / sigma_p[k])
                .sum();
            if h[(i, j)] != 0.0 {
                value -= beta(i, j) * (h[(i, i)] / sigma_p[i] + h[(j, j)] / sigma_p[j]);
            }
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
    }
    out
}

/// `Σ_θ⁻¹ = H_β Σ_p⁻¹ H_β`, computed by matrix product and by the per-entry
/// closed form; the two must agree to [`DC_ROUTE_AGREEMENT`].
pub fn dc_concentration(model: &DcModel, stats: &InjectionStats) -> Result<ConcentrationMatrix> {
    stats.check_dim(model.dim())?;
    let h = &model.h_beta.matrix;
    let inv_sigma: Vec<f64> = stats.sigma_pp().iter().map(|s| 1.0 / s).collect();
    let mut product = h * DMatrix::from_diagonal(&DVector::from_vec(inv_sigma)) * h;
    linalg::symmetrize(&mut product);

    let closed = dc_concentration_closed_form(h, stats.sigma_pp());
    let deviation = linalg::max_rel_diff(&closed, &product);
    if deviation > DC_ROUTE_AGREEMENT {
        return Err(Error::Numerical(format!(
            "DC concentration routes disagree: relative deviation {deviation:e}"
        )));
    }
    ConcentrationMatrix::new(closed, variable_labels(model.buses(), ModelKind::Dc))
}

/// Full `2N×2N` injection covariance `[[Σ_pp, Σ_pq], [Σ_pq, Σ_qq]]`.
pub fn injection_covariance(stats: &InjectionStats) -> DMatrix<f64> {
    let n = stats.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = stats.sigma_pp()[i];
        m[(n + i, n + i)] = stats.sigma_qq()[i];
        m[(i, n + i)] = stats.sigma_pq()[i];
        m[(n + i, i)] = stats.sigma_pq()[i];
    }
    m
}

/// `Σ_(v,θ) = S⁻¹ Σ_(p,q) S⁻¹`.
pub fn lc_voltage_covariance(model: &LcModel, stats: &InjectionStats) -> Result<DMatrix<f64>> {
    stats.check_dim(model.dim())?;
    let lu = model.system.clone().lu();
    let left = lu
        .solve(&injection_covariance(stats))
        .ok_or_else(|| Error::Numerical("LC system matrix is singular".into()))?;
    let mut cov = lu
        .solve(&left.transpose())
        .ok_or_else(|| Error::Numerical("LC system matrix is singular".into()))?
        .transpose();
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// `X · diag(d) · Y`.
fn sandwich(x: &DMatrix<f64>, d: &[f64], y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xd = x.clone();
    for (j, mut col) in xd.column_iter_mut().enumerate() {
        col *= d[j];
    }
    xd * y
}

/// Closed-form LC concentration blocks.
///
/// With `D(i,i) = |σ_pp σ_qq - σ_pq²|`:
///
/// ```text
/// J_vv = H_g D⁻¹(Σ_qq H_g - Σ_pq H_β) - H_β D⁻¹(Σ_pq H_g - Σ_pp H_β)
/// J_vθ = H_g D⁻¹(Σ_qq H_β + Σ_pq H_g) - H_β D⁻¹(Σ_pq H_β + Σ_pp H_g)
/// J_θv = H_β D⁻¹(Σ_qq H_g - Σ_pq H_β) + H_g D⁻¹(Σ_pq H_g - Σ_pp H_β)
/// J_θθ = H_β D⁻¹(Σ_qq H_β + Σ_pq H_g) + H_g D⁻¹(Σ_pq H_β + Σ_pp H_g)
/// ```
///
/// `J_vθ` leads with `H_g`, which makes it the transpose of `J_θv`; the
/// variant with `H_β` leading both terms does not invert the covariance.
pub fn lc_concentration(model: &LcModel, stats: &InjectionStats) -> Result<ConcentrationMatrix> {
    stats.check_dim(model.dim())?;
    let n = model.dim();
    let g = &model.h_g.matrix;
    let b = &model.h_beta.matrix;
    let mut qq = Vec::with_capacity(n);
    let mut pq = Vec::with_capacity(n);
    let mut pp = Vec::with_capacity(n);
    for i in 0..n {
        let det = stats.block_det(i);
        if det <= 0.0 {
            return Err(Error::Precondition(format!(
                "degenerate injection block at bus index {i}"
            )));
        }
        qq.push(stats.sigma_qq()[i] / det);
        pq.push(stats.sigma_pq()[i] / det);
        pp.push(stats.sigma_pp()[i] / det);
    }

    let j_vv = sandwich(g, &qq, g) - sandwich(g, &pq, b) - (sandwich(b, &pq, g) - sandwich(b, &pp, b));
    let j_vt = sandwich(g, &qq, b) + sandwich(g, &pq, g) - (sandwich(b, &pq, b) + sandwich(b, &pp, g));
    let j_tv = sandwich(b, &qq, g) - sandwich(b, &pq, b) + (sandwich(g, &pq, g) - sandwich(g, &pp, b));
    let j_tt = sandwich(b, &qq, b) + sandwich(b, &pq, g) + (sandwich(g, &pq, b) + sandwich(g, &pp, g));

    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&j_vv);
    m.view_mut((0, n), (n, n)).copy_from(&j_vt);
    m.view_mut((n, 0), (n, n)).copy_from(&j_tv);
    m.view_mut((n, n), (n, n)).copy_from(&j_tt);
    linalg::symmetrize(&mut m);
    ConcentrationMatrix::new(m, variable_labels(model.buses(), ModelKind::Lc))
}

/// Analytical voltage covariance of `grid` under `model`.
pub fn analytic_covariance(grid: &Grid, stats: &InjectionStats, model: ModelKind) -> Result<DMatrix<f64>> {
    match model {
        ModelKind::Dc => dc_phase_covariance(&DcModel::new(grid)?, stats),
        ModelKind::Lc => lc_voltage_covariance(&LcModel::new(grid)?, stats),
    }
}

/// Analytical concentration matrix of `grid` under `model`.
pub fn analytic_concentration(grid: &Grid, stats: &InjectionStats, model: ModelKind) -> Result<ConcentrationMatrix> {
    match model {
        ModelKind::Dc => dc_concentration(&DcModel::new(grid)?, stats),
        ModelKind::Lc => lc_concentration(&LcModel::new(grid)?, stats),
    }
}
