//! Gaussian injection fluctuations and the voltage samples they induce.
//!
//! Randomness comes from `ChaCha8Rng` seeded with a `u64`, with standard
//! normals from `rand_distr::StandardNormal`. Both are platform independent,
//! so a `(grid, stats, model, n, seed)` tuple always yields the same samples.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::powerflow::{variable_labels, DcModel, InjectionStats, LcModel, ModelKind, VarLabel};

/// `n` samples of the voltage variables, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub model_kind: ModelKind,
    pub samples: DMatrix<f64>,
    pub labels: Vec<VarLabel>,
    pub seed: u64,
}

/// Sidecar written next to an exported sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub grid_hash: String,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub n: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// CSV with a header of variable labels and one row per sample.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.labels.iter().map(ToString::to_string))?;
        for row in self.samples.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`SampleSet::write_csv`]. The seed is not part of
    /// the CSV and must be supplied (e.g. from the sidecar).
    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<SampleSet> {
        let mut rdr = csv::Reader::from_reader(reader);
        let labels = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().parse::<VarLabel>())
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        let mut rows = 0;
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != labels.len() {
                return Err(Error::Parse(format!(
                    "sample row {}: expected {} values, found {}",
                    idx + 1,
                    labels.len(),
                    rec.len()
                )));
            }
            for field in rec.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("sample row {}: '{field}': {e}", idx + 1)))?,
                );
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Parse("sample file has no rows".into()));
        }
        let model_kind = if labels.iter().any(|l| l.kind == crate::powerflow::VarKind::V) {
            ModelKind::Lc
        } else {
            ModelKind::Dc
        };
        let buses: Vec<usize> = labels[..match model_kind {
            ModelKind::Dc => labels.len(),
            ModelKind::Lc => labels.len() / 2,
        }]
            .iter()
            .map(|l| l.bus)
            .collect();
        if variable_labels(&buses, model_kind) != labels {
            return Err(Error::Parse("sample header is not in canonical variable order".into()));
        }
        Ok(SampleSet {
            model_kind,
            samples: DMatrix::from_row_slice(rows, labels.len(), &values),
            labels,
            seed,
        })
    }

    pub fn metadata(&self, grid: &Grid) -> SampleMetadata {
        SampleMetadata {
            grid_hash: grid.content_hash(),
            model_kind: self.model_kind,
            seed: self.seed,
            n: self.len(),
        }
    }
}

/// Child seed for trial `trial` of a sweep seeded with `seed` (SplitMix64 finalizer).
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n × 2N` matrix of injections: columns `p_1..p_N` then `q_1..q_N`.
///
/// Buses are independent; within a bus `(p, q)` is drawn through the
/// Cholesky factor of its 2×2 covariance block.
pub fn sample_injections(stats: &InjectionStats, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    stats.validate()?;
    if n == 0 {
        return Err(Error::Precondition("sample count must be at least 1".into()));
    }
    let buses = stats.len();
    let factors: Vec<(f64, f64, f64)> = (0..buses)
        .map(|i| {
            let l11 = stats.sigma_pp()[i].sqrt();
            let l21 = stats.sigma_pq()[i] / l11;
            let l22 = (stats.sigma_qq()[i] - l21 * l21).sqrt();
            (l11, l21, l22)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, 2 * buses);
    for row in 0..n {
        for (i, &(l11, l21, l22)) in factors.iter().enumerate() {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            out[(row, i)] = l11 * z1;
            out[(row, buses + i)] = l21 * z1 + l22 * z2;
        }
    }
    Ok(out)
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} has length {got}, expected {want}")))
    }
}

/// Solves `H_β θ = p`.
pub fn solve_dc(model: &DcModel, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("p", p.len(), model.dim())?;
    Ok(linalg::cholesky(&model.h_beta.matrix, "H_beta")?.solve(p))
}

/// Solves `S [v; θ] = [p; q]`.
pub fn solve_lc(model: &LcModel, p: &DVector<f64>, q: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = model.dim();
    check_len("p", p.len(), n)?;
    check_len("q", q.len(), n)?;
    let rhs = DVector::from_iterator(2 * n, p.iter().chain(q.iter()).copied());
    let x = model
        .system
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("LC system matrix is singular".into()))?;
    Ok((x.rows(0, n).into_owned(), x.rows(n, n).into_owned()))
}

/// Draws injections and maps them through the chosen model. For DC the
/// reactive columns are drawn but unused.
pub fn generate_voltage_samples(
    grid: &Grid,
    stats: &InjectionStats,
    model_kind: ModelKind,
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    let buses = grid.non_reference_buses();
    let dim = buses.len();
    if stats.len() != dim {
        return Err(Error::Precondition(format!(
            "injection statistics cover {} buses, grid has {dim}",
            stats.len()
        )));
    }
    let injections = sample_injections(stats, n, seed)?;
    let samples = match model_kind {
        ModelKind::Dc => {
            let model = DcModel::new(grid)?;
            let chol = linalg::cholesky(&model.h_beta.matrix, "H_beta")?;
            let p_t = injections.columns(0, dim).transpose();
            chol.solve(&p_t).transpose()
        }
        ModelKind::Lc => {
            let model = LcModel::new(grid)?;
            let lu = model.system.clone().lu();
            lu.solve(&injections.transpose())
                .ok_or_else(|| Error::Numerical("LC system matrix is singular".into()))?
                .transpose()
        }
    };
    Ok(SampleSet {
        model_kind,
        samples,
        labels: variable_labels(&buses, model_kind),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Line;
    use approx::assert_relative_eq;

    fn path_grid(n: usize) -> Grid {
        let lines = (0..n - 1).map(|k| Line::new(k, k + 1, 0.02, 0.05)).collect();
        Grid::new(0, &(0..n).collect::<Vec<_>>(), lines).unwrap()
    }

    #[test]
    fn degenerate_block_rejected() {
        // σ_pq = σ_pp σ_qq = 1 makes the (p, q) block singular.
        let stats = InjectionStats::new(vec![1.0], vec![1.0], vec![0.5]).unwrap();
        assert!(sample_injections(&stats, 0, 1).is_err());
        assert!(InjectionStats::new(vec![1.0], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn injections_are_deterministic() {
        let stats = InjectionStats::uniform(3, 1.0, 2.0, 0.3).unwrap();
        let a = sample_injections(&stats, 50, 42).unwrap();
        let b = sample_injections(&stats, 50, 42).unwrap();
        let c = sample_injections(&stats, 50, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn injection_block_moments() {
        // 3σ bound on each second moment at n = 1e5 is well under 0.02.
        let stats = InjectionStats::uniform(2, 1.0, 1.0, 0.5).unwrap();
        let n = 100_000;
        let x = sample_injections(&stats, n, 9).unwrap();
        let cov = x.transpose() * &x / n as f64;
        for i in 0..2 {
            assert!((cov[(i, i)] - 1.0).abs() < 0.02);
            assert!((cov[(2 + i, 2 + i)] - 1.0).abs() < 0.02);
            assert!((cov[(i, 2 + i)] - 0.5).abs() < 0.02);
        }
        assert!(cov[(0, 1)].abs() < 0.02);
        assert!(cov[(0, 3)].abs() < 0.02);
    }

    #[test]
    fn scalar_solves() {
        let g = Grid::new(0, &[0, 1], vec![Line::new(0, 1, 0.0, 0.5)]).unwrap();
        let m = DcModel::new(&g).unwrap();
        let theta = solve_dc(&m, &DVector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(theta[0], 0.5, epsilon = 1e-15);
        assert_eq!(solve_dc(&m, &DVector::zeros(1)).unwrap()[0], 0.0);
        assert!(solve_dc(&m, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_injection_gives_zero_voltage() {
        let g = path_grid(4);
        let (v, t) = solve_lc(&LcModel::new(&g).unwrap(), &DVector::zeros(3), &DVector::zeros(3)).unwrap();
        assert!(v.iter().chain(t.iter()).all(|x| *x == 0.0));
    }

    #[test]
    fn single_sample_and_labels() {
        let g = path_grid(4);
        let stats = InjectionStats::uniform(3, 1.0, 1.0, 0.5).unwrap();
        let s = generate_voltage_samples(&g, &stats, ModelKind::Lc, 1, 5).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.labels[0].to_string(), "v_1");
        assert_eq!(s.labels[3].to_string(), "theta_1");
    }

    #[test]
    fn csv_round_trip() {
        let g = path_grid(3);
        let stats = InjectionStats::uniform(2, 1.0, 1.0, 0.5).unwrap();
        let s = generate_voltage_samples(&g, &stats, ModelKind::Dc, 7, 11).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_1,theta_2\n"));
        let back = SampleSet::read_csv(buf.as_slice(), 11).unwrap();
        assert_eq!(back, s);
        assert!(SampleSet::read_csv("theta_1\n".as_bytes(), 0).is_err());
        assert!(SampleSet::read_csv("theta_1,theta_2\n1.0\n".as_bytes(), 0).is_err());
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..100).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(trial_seed(7, 3), trial_seed(7, 3));
    }
}
