use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::load_grid;
use crate::error::{Error, Result};
use crate::estimation::{estimate, Estimator, GlassoConfig};
use crate::grid::Grid;
use crate::powerflow::{analytic_concentration, ConcentrationMatrix, InjectionStats, ModelKind};
use crate::sampling::{generate_voltage_samples, trial_seed};
use crate::topology::{
    build_graphical_model, edge_errors, largest_gap_threshold, learn_by_counting_from_model, learn_from_scores,
    noise_floor_threshold, relative_threshold, standardized_edge_scores, Algorithm, EdgeErrors, LearnedTopology,
    EXACT_RELATIVE_THRESHOLD, NOISE_FLOOR_ALPHA,
};

/// Environment variable that overrides the seed from config and flags.
pub const SEED_ENV_VAR: &str = "GRIDTOPO_SEED";

/// A finite sample count, or the exact analytical concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "NumberOrText", into = "NumberOrText")]
pub enum SampleSize {
    Finite(usize),
    Exact,
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Finite(n) => write!(f, "{n}"),
            SampleSize::Exact => f.write_str("exact"),
        }
    }
}

impl std::str::FromStr for SampleSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("exact") {
            return Ok(SampleSize::Exact);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(SampleSize::Finite(n)),
            _ => Err(Error::Parse(format!(
                "bad sample count '{s}' (expected a positive integer or 'exact')"
            ))),
        }
    }
}

/// Explicit value, or chosen from the data.
///
/// `auto` uses `1e-4 · max |off-diagonal|` on exact matrices and the
/// family-wise noise floor of [`noise_floor_threshold`] on estimates; `gap`
/// cuts at the largest relative gap between sorted `|off-diagonal|` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NumberOrText", into = "NumberOrText")]
pub enum Threshold {
    Auto,
    Gap,
    Value(f64),
}

impl Threshold {
    /// Magnitude picked for the unit-diagonal matrix `m`, estimated from
    /// `samples` observations or exact when `None`.
    fn magnitude(self, m: &DMatrix<f64>, samples: Option<usize>) -> Result<f64> {
        match (self, samples) {
            (Threshold::Value(t), _) => Ok(t.abs()),
            (Threshold::Auto, None) => Ok(relative_threshold(m, EXACT_RELATIVE_THRESHOLD)),
            (Threshold::Auto, Some(n)) => Ok(noise_floor_threshold(n, m.nrows(), NOISE_FLOOR_ALPHA)),
            (Threshold::Gap, _) => largest_gap_threshold(m)
                .ok_or_else(|| Error::Precondition("no gap between off-diagonal magnitudes to cut at".into())),
        }
    }

    /// `τ₁ > 0` for building a graphical model. An explicit value is used
    /// as given.
    pub fn tau1(self, m: &DMatrix<f64>, samples: Option<usize>) -> Result<f64> {
        match self {
            Threshold::Value(t) => Ok(t),
            _ => self.magnitude(m, samples),
        }
    }

    /// `τ₂ < 0` for sign thresholding. An explicit value is used as given.
    pub fn tau2(self, m: &DMatrix<f64>, samples: Option<usize>) -> Result<f64> {
        match self {
            Threshold::Value(t) => Ok(t),
            _ => Ok(-self.magnitude(m, samples)?),
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        if s.eq_ignore_ascii_case("gap") {
            return Ok(Threshold::Gap);
        }
        s.parse::<f64>()
            .map(Threshold::Value)
            .map_err(|_| Error::Parse(format!("bad threshold '{s}' (expected a number, 'auto' or 'gap')")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Integer(u64),
    Number(f64),
    Text(String),
}

impl TryFrom<NumberOrText> for SampleSize {
    type Error = Error;
    fn try_from(v: NumberOrText) -> Result<Self> {
        match v {
            NumberOrText::Integer(n) if n >= 1 => Ok(SampleSize::Finite(n as usize)),
            NumberOrText::Integer(n) => Err(Error::Parse(format!("bad sample count {n}"))),
            NumberOrText::Number(x) => Err(Error::Parse(format!("bad sample count {x}"))),
            NumberOrText::Text(s) => s.parse(),
        }
    }
}

impl From<SampleSize> for NumberOrText {
    fn from(v: SampleSize) -> Self {
        match v {
            SampleSize::Finite(n) => NumberOrText::Integer(n as u64),
            SampleSize::Exact => NumberOrText::Text("exact".into()),
        }
    }
}

impl TryFrom<NumberOrText> for Threshold {
    type Error = Error;
    fn try_from(v: NumberOrText) -> Result<Self> {
        match v {
            NumberOrText::Integer(x) => Ok(Threshold::Value(x as f64)),
            NumberOrText::Number(x) => Ok(Threshold::Value(x)),
            NumberOrText::Text(s) => s.parse(),
        }
    }
}

impl From<Threshold> for NumberOrText {
    fn from(v: Threshold) -> Self {
        match v {
            Threshold::Auto => NumberOrText::Text("auto".into()),
            Threshold::Gap => NumberOrText::Text("gap".into()),
            Threshold::Value(x) => NumberOrText::Number(x),
        }
    }
}

fn default_threshold() -> Threshold {
    Threshold::Auto
}

fn default_estimator() -> Estimator {
    Estimator::Auto
}

/// One sweep over sample sizes and trials.
///
/// Thresholds apply to unit-diagonal matrices: `τ₁ > 0` for counting,
/// `τ₂ < 0` for thresholding. See [`Threshold`] for `auto` and `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub grid: String,
    pub model: ModelKind,
    pub algorithm: Algorithm,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    pub sample_counts: Vec<SampleSize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: Threshold,
    #[serde(default)]
    pub glasso: GlassoConfig,
}

impl ExperimentSpec {
    pub fn new(
        grid: &str,
        model: ModelKind,
        algorithm: Algorithm,
        sample_counts: Vec<SampleSize>,
        trials: usize,
    ) -> Self {
        ExperimentSpec {
            grid: grid.to_string(),
            model,
            algorithm,
            estimator: Estimator::Auto,
            sample_counts,
            trials,
            seed: 0,
            threshold: Threshold::Auto,
            glasso: GlassoConfig::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Replaces the seed with `GRIDTOPO_SEED` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var(SEED_ENV_VAR) {
            self.seed = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{SEED_ENV_VAR}='{value}' is not a u64")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be >= 1".into()));
        }
        if self.sample_counts.is_empty() {
            return Err(Error::Precondition("sample_counts is empty".into()));
        }
        if self.sample_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition("sample_counts must be strictly increasing".into()));
        }
        if let Threshold::Value(t) = self.threshold {
            let ok = match self.algorithm {
                Algorithm::Counting => t > 0.0,
                Algorithm::Thresholding => t < 0.0,
            };
            if !ok {
                return Err(Error::Precondition(format!(
                    "threshold {t} has the wrong sign for {} (counting needs > 0, thresholding < 0)",
                    self.algorithm
                )));
            }
        }
        self.glasso.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: SampleSize,
    pub trial: usize,
    pub errors: EdgeErrors,
    /// Set when a stage failed; the trial is then scored as an empty topology.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: SampleSize,
    pub mean: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub std: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub grid_hash: String,
    /// Sorted by `(n, trial)`.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub version: String,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    grid: &'a Grid,
    stats: &'a InjectionStats,
}

impl Context<'_> {
    fn concentration(&self, n: SampleSize, seed: u64) -> Result<ConcentrationMatrix> {
        match n {
            SampleSize::Exact => analytic_concentration(self.grid, self.stats, self.spec.model),
            SampleSize::Finite(n) => {
                let samples = generate_voltage_samples(self.grid, self.stats, self.spec.model, n, seed)?;
                let labels = samples.labels.clone();
                estimate(&samples, self.spec.estimator, &self.spec.glasso)?.into_concentration(labels)
            }
        }
    }

    fn learn(&self, conc: &ConcentrationMatrix, n: SampleSize) -> Result<LearnedTopology> {
        let samples = match n {
            SampleSize::Exact => None,
            SampleSize::Finite(n) => Some(n),
        };
        learn_with(conc, self.spec.algorithm, self.spec.threshold, samples)
    }

    fn trial(&self, n_index: usize, n: SampleSize, trial: usize) -> TrialRecord {
        let seed = trial_seed(self.spec.seed, ((n_index as u64) << 32) | trial as u64);
        let outcome = self
            .concentration(n, seed)
            .and_then(|conc| self.learn(&conc, n))
            .and_then(|learned| edge_errors(&learned, self.grid));
        let (errors, failure) = match outcome {
            Ok(e) => (e, None),
            Err(e) => (
                EdgeErrors::all_missed(self.grid.non_reference_edges().len()),
                Some(e.to_string()),
            ),
        };
        TrialRecord {
            n,
            trial,
            errors,
            failure,
        }
    }
}

/// Runs every `(n, trial)` pair in parallel. A failing trial does not abort
/// the sweep; it is recorded and scored as if nothing was learned.
/// Runs `algorithm` on the unit-diagonal form of `conc`, resolving
/// `threshold` against it.
pub fn learn_with(
    conc: &ConcentrationMatrix,
    algorithm: Algorithm,
    threshold: Threshold,
    samples: Option<usize>,
) -> Result<LearnedTopology> {
    match algorithm {
        Algorithm::Thresholding => {
            let scores = standardized_edge_scores(conc)?;
            let tau2 = threshold.tau2(&scores, samples)?;
            learn_from_scores(&scores, conc.buses(), tau2)
        }
        Algorithm::Counting => {
            let standardized = conc.standardized()?;
            let tau1 = threshold.tau1(standardized.matrix(), samples)?;
            learn_by_counting_from_model(&build_graphical_model(&standardized, tau1)?)
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let started = unix_now();
    let (grid, stats) = load_grid(&spec.grid)?;
    let ctx = Context {
        spec,
        grid: &grid,
        stats: &stats,
    };
    let jobs: Vec<(usize, SampleSize, usize)> = spec
        .sample_counts
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| (0..spec.trials).map(move |t| (k, n, t)))
        .collect();
    let mut records: Vec<TrialRecord> = jobs.par_iter().map(|&(k, n, t)| ctx.trial(k, n, t)).collect();
    records.sort_by_key(|r| (r.n, r.trial));

    let summary = spec
        .sample_counts
        .iter()
        .map(|&n| {
            let totals: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.errors.total as f64)
                .collect();
            let k = totals.len() as f64;
            let mean = totals.iter().sum::<f64>() / k;
            let std = if totals.len() > 1 {
                (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                n,
                mean,
                std,
                failures: records.iter().filter(|r| r.n == n && r.failure.is_some()).count(),
            }
        })
        .collect();

    Ok(ExperimentResult {
        spec: spec.clone(),
        grid_hash: grid.content_hash(),
        records,
        summary,
        started_unix: started,
        finished_unix: unix_now(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

#[derive(Serialize)]
struct FailureEntry<'a> {
    n: SampleSize,
    trial: usize,
    message: &'a str,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a ExperimentSpec,
    grid_hash: &'a str,
    summary: &'a [SummaryRow],
    failures: Vec<FailureEntry<'a>>,
    started_unix: f64,
    finished_unix: f64,
    version: &'a str,
}

impl ExperimentResult {
    pub fn mean_errors(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.mean).collect()
    }

    /// Columns `grid, model, algo, estimator, n, trial, fp, fn, total`.
    /// Contains no timestamps, so identical specs give identical bytes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["grid", "model", "algo", "estimator", "n", "trial", "fp", "fn", "total"])?;
        for r in &self.records {
            w.write_record([
                self.spec.grid.clone(),
                self.spec.model.to_string(),
                self.spec.algorithm.to_string(),
                self.spec.estimator.to_string(),
                r.n.to_string(),
                r.trial.to_string(),
                r.errors.false_positives.to_string(),
                r.errors.false_negatives.to_string(),
                r.errors.total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `n, mean, std, failures`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "mean", "std", "failures"])?;
        for s in &self.summary {
            w.write_record([
                s.n.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
                s.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Spec, summary, failure messages, timestamps and library version.
    pub fn sidecar_json(&self) -> String {
        let sidecar = Sidecar {
            spec: &self.spec,
            grid_hash: &self.grid_hash,
            summary: &self.summary,
            failures: self
                .records
                .iter()
                .filter_map(|r| {
                    r.failure.as_deref().map(|message| FailureEntry {
                        n: r.n,
                        trial: r.trial,
                        message,
                    })
                })
                .collect(),
            started_unix: self.started_unix,
            finished_unix: self.finished_unix,
            version: &self.version,
        };
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes")
    }

    /// Writes `out`, `<out>.summary.csv` and `<out>.meta.json`; returns the
    /// three paths.
    pub fn write_all(&self, out: &Path) -> Result<[PathBuf; 3]> {
        let with_suffix = |suffix: &str| {
            let mut s = out.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let summary = with_suffix(".summary.csv");
        let meta = with_suffix(".meta.json");
        self.write_csv(std::fs::File::create(out)?)?;
        self.write_summary_csv(std::fs::File::create(&summary)?)?;
        std::fs::write(&meta, self.sidecar_json())?;
        Ok([out.to_path_buf(), summary, meta])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_size_serde() {
        let v: Vec<SampleSize> = serde_json::from_str(r#"[500, "exact"]"#).unwrap();
        assert_eq!(v, [SampleSize::Finite(500), SampleSize::Exact]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[500,"exact"]"#);
        assert!(serde_json::from_str::<SampleSize>("0").is_err());
        assert!(SampleSize::Finite(10) < SampleSize::Exact);
    }

    #[test]
    fn threshold_serde() {
        assert_eq!(serde_json::from_str::<Threshold>(r#""auto""#).unwrap(), Threshold::Auto);
        assert_eq!(
            serde_json::from_str::<Threshold>("-0.1").unwrap(),
            Threshold::Value(-0.1)
        );
        assert_eq!("GAP".parse::<Threshold>().unwrap(), Threshold::Gap);
        assert_eq!(serde_json::to_string(&Threshold::Gap).unwrap(), r#""gap""#);
        assert!("median".parse::<Threshold>().is_err());
    }

    #[test]
    fn threshold_resolution() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 1e-6, -0.5, 1.0, -0.4, 1e-6, -0.4, 1.0]);
        assert_eq!(Threshold::Value(-0.3).tau2(&m, None).unwrap(), -0.3);
        assert_eq!(Threshold::Auto.tau1(&m, None).unwrap(), 0.5e-4);
        assert_eq!(
            Threshold::Auto.tau2(&m, Some(100)).unwrap(),
            -noise_floor_threshold(100, 3, NOISE_FLOOR_ALPHA)
        );
        let gap = Threshold::Gap.tau1(&m, Some(100)).unwrap();
        assert!(gap > 1e-6 && gap < 0.4);
        assert!(Threshold::Gap.tau1(&DMatrix::identity(3, 3), None).is_err());
    }

    #[test]
    fn validation() {
        let mut spec = ExperimentSpec::new(
            "radial20",
            ModelKind::Dc,
            Algorithm::Thresholding,
            vec![SampleSize::Finite(100), SampleSize::Finite(50)],
            1,
        );
        assert!(spec.validate().is_err());
        spec.sample_counts = vec![SampleSize::Finite(50)];
        spec.threshold = Threshold::Value(0.1);
        assert!(spec.validate().is_err());
        spec.threshold = Threshold::Value(-0.1);
        assert!(spec.validate().is_ok());
        spec.trials = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn exact_sweep_is_error_free() {
        let spec = ExperimentSpec::new(
            "radial20",
            ModelKind::Lc,
            Algorithm::Thresholding,
            vec![SampleSize::Exact],
            1,
        );
        let result = run_experiment(&spec).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.summary[0].mean, 0.0);
    }
}
