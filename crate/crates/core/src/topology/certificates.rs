//! Sufficient conditions under which thresholding still recovers an edge that
//! lies on triangles.
//!
//! For a line `(i, j)` with common neighbors `𝒦` (other than the reference),
//! the DC concentration entry is
//!
//! ```text
//! -β_ij (β_i/σ_i + β_j/σ_j) + Σ_{k∈𝒦} β_ik β_jk / σ_k
//! ```
//!
//! with `β_i` the total susceptance at `i` and `σ` the active-injection
//! variances. Each condition below implies that this entry is negative.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reduced_laplacian, Grid, WeightKind};
use crate::powerflow::InjectionStats;

/// Relative tolerance for "all injection variances equal" and "constant
/// susceptance per unit length".
pub const EQUALITY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// `𝒦` is empty: the entry is `-β_ij(β_i/σ_i + β_j/σ_j) < 0`.
    TriviallySafe,
    /// Quadratic condition on `β_ij` for an arbitrary `𝒦`. Equivalent to the
    /// entry being negative.
    General,
    /// `|𝒦| = 1`, using only the two triangle lines in the linear term.
    SingleTriangle,
    /// All `σ` equal: `β_ij > max β_kr / (1 + √(1 + 2/|𝒦|))`.
    EqualInjections,
    /// All `σ` equal and susceptance proportional to length (`β = l·β_u`):
    /// the same inequality on lengths.
    UniformLines,
}

impl Certificate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Certificate::TriviallySafe => "trivially_safe",
            Certificate::General => "general",
            Certificate::SingleTriangle => "single_triangle",
            Certificate::EqualInjections => "equal_injections",
            Certificate::UniformLines => "uniform_lines",
        }
    }

    fn specificity(&self) -> u8 {
        match self {
            Certificate::TriviallySafe => 4,
            Certificate::UniformLines => 3,
            Certificate::EqualInjections => 2,
            Certificate::SingleTriangle => 1,
            Certificate::General => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub certificate: Certificate,
    pub satisfied: bool,
    /// Left-hand side minus right-hand side of the inequality.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCertificate {
    pub edge: (usize, usize),
    /// Common neighbors of the endpoints, reference excluded.
    pub common: Vec<usize>,
    /// The most specific applicable check.
    pub certificate: Certificate,
    pub satisfied: bool,
    pub margin: f64,
    /// Every applicable check, most specific first.
    pub checks: Vec<CertificateCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub records: Vec<EdgeCertificate>,
}

impl SufficiencyReport {
    pub fn satisfied_count(&self) -> usize {
        self.records.iter().filter(|r| r.satisfied).count()
    }

    pub fn violated(&self) -> impl Iterator<Item = &EdgeCertificate> {
        self.records.iter().filter(|r| !r.satisfied)
    }

    /// CSV with columns `edge, theorem, satisfied, margin`; `edge` is `i-j`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["edge", "theorem", "satisfied", "margin"])?;
        for r in &self.records {
            w.write_record([
                format!("{}-{}", r.edge.0, r.edge.1),
                r.certificate.as_str().to_string(),
                r.satisfied.to_string(),
                format!("{:e}", r.margin),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn all_equal(values: &[f64]) -> bool {
    let Some(&first) = values.first() else {
        return true;
    };
    values
        .iter()
        .all(|v| (v - first).abs() <= EQUALITY_RTOL * first.abs().max(v.abs()))
}

/// `β > -b + √(b² + a)`, returned as `β - (-b + √(b² + a))`.
fn quadratic_margin(beta: f64, b: f64, a: f64) -> f64 {
    beta - (-b + (b * b + a).sqrt())
}

/// Evaluates the triangle conditions for every line between non-reference
/// buses. Lines to the reference are omitted because the concentration has
/// no entry for them.
pub fn check_triangle_sufficiency(grid: &Grid, stats: &InjectionStats) -> Result<SufficiencyReport> {
    let h = reduced_laplacian(grid, WeightKind::Susceptance)?;
    if stats.len() != h.dim() {
        return Err(Error::Precondition(format!(
            "injection statistics cover {} buses, grid has {}",
            stats.len(),
            h.dim()
        )));
    }
    let sigma = stats.sigma_pp();
    let idx = |bus: usize| grid.matrix_index(bus).expect("non-reference bus");
    let beta = |a: usize, b: usize| -h.matrix[(idx(a), idx(b))];

    let equal_sigma = all_equal(sigma);
    // Susceptance per unit length, if every line has a positive length.
    let per_length: Option<Vec<f64>> = grid
        .lines()
        .iter()
        .map(|l| match l.length {
            Some(len) if len > 0.0 => l.weight(WeightKind::Susceptance).ok().map(|b| b / len),
            _ => None,
        })
        .collect();
    let uniform_lines = equal_sigma && per_length.as_deref().is_some_and(all_equal);

    let mut records = Vec::new();
    for (i, j) in grid.non_reference_edges() {
        let ni = grid.neighbors(i)?;
        let nj = grid.neighbors(j)?;
        let common: Vec<usize> = ni
            .intersection(&nj)
            .copied()
            .filter(|&k| k != grid.reference())
            .collect();
        let (si, sj) = (sigma[idx(i)], sigma[idx(j)]);
        let bij = beta(i, j);
        let mut checks = Vec::new();

        if common.is_empty() {
            let entry = -bij * (h.matrix[(idx(i), idx(i))] / si + h.matrix[(idx(j), idx(j))] / sj);
            checks.push(CertificateCheck {
                certificate: Certificate::TriviallySafe,
                satisfied: true,
                margin: -entry,
            });
        } else {
            let a = si * sj / (si + sj)
                * common
                    .iter()
                    .map(|&k| beta(i, k) * beta(j, k) / sigma[idx(k)])
                    .sum::<f64>();
            let bi = h.matrix[(idx(i), idx(i))];
            let bj = h.matrix[(idx(j), idx(j))];
            let b = (sj * (bi - bij) + si * (bj - bij)) / (2.0 * (si + sj));
            let margin = quadratic_margin(bij, b, a);
            checks.push(CertificateCheck {
                certificate: Certificate::General,
                satisfied: margin > 0.0,
                margin,
            });

            if common.len() == 1 {
                let k = common[0];
                let b1 = (sj * beta(i, k) + si * beta(j, k)) / (2.0 * (si + sj));
                let margin = quadratic_margin(bij, b1, a);
                checks.push(CertificateCheck {
                    certificate: Certificate::SingleTriangle,
                    satisfied: margin > 0.0,
                    margin,
                });
            }

            let denom = 1.0 + (1.0 + 2.0 / common.len() as f64).sqrt();
            if equal_sigma {
                let max_beta = common
                    .iter()
                    .flat_map(|&k| [beta(k, i), beta(k, j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let margin = bij - max_beta / denom;
                checks.push(CertificateCheck {
                    certificate: Certificate::EqualInjections,
                    satisfied: margin > 0.0,
                    margin,
                });
            }
            if uniform_lines {
                let len = |a: usize, b: usize| {
                    grid.line_between(a, b)
                        .and_then(|l| l.length)
                        .expect("uniform_lines implies every line has a length")
                };
                let max_len = common
                    .iter()
                    .flat_map(|&k| [len(k, i), len(k, j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let margin = len(i, j) - max_len / denom;
                checks.push(CertificateCheck {
                    certificate: Certificate::UniformLines,
                    satisfied: margin > 0.0,
                    margin,
                });
            }
        }

        checks.sort_by_key(|c| std::cmp::Reverse(c.certificate.specificity()));
        let primary = checks[0].clone();
        records.push(EdgeCertificate {
            edge: (i, j),
            common,
            certificate: primary.certificate,
            satisfied: primary.satisfied,
            margin: primary.margin,
            checks,
        });
    }
    Ok(SufficiencyReport { records })
}
