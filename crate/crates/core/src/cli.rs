//! Command-line front end. Every subcommand reads and writes the library's
//! file formats; failures are printed to stderr as
//! `{"error": <kind>, "message": <text>}` with a nonzero exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{
    estimate, graphical_lasso_standardized, invert_covariance, sample_covariance, ConcentrationFile, Estimator,
    GlassoConfig,
};
use crate::grid::Grid;
use crate::harness::{learn_with, load_grid, run_experiment, ExperimentSpec, SampleSize, Threshold};
use crate::powerflow::{analytic_concentration, InjectionStats, ModelKind};
use crate::sampling::{generate_voltage_samples, SampleSet};
use crate::topology::{check_triangle_sufficiency, Algorithm};

#[derive(Debug, Parser)]
#[command(
    name = "gridtopo",
    version,
    about = "Grid topology learning from nodal voltage samples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect a grid.
    #[command(subcommand)]
    Grid(GridCommand),
    /// Draw voltage samples and write them as CSV.
    Sample(SampleArgs),
    /// Estimate a concentration matrix from a sample CSV.
    Estimate(EstimateArgs),
    /// Learn the topology from an exact or estimated concentration matrix.
    Learn(LearnArgs),
    /// Evaluate the triangle sufficiency conditions for every line.
    Certify(CertifyArgs),
    /// Run a sample-size sweep and write results CSV, summary and metadata.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Subcommand)]
pub enum GridCommand {
    /// Load and check a grid; prints a short JSON confirmation.
    Validate(GridArg),
    /// Print bus count, girth, triangle lines and hash as JSON.
    Info(GridArg),
}

#[derive(Debug, Args)]
pub struct GridArg {
    /// Built-in name (radial20, loopy20_c4, loopy20_c7, ieee14) or a .json/.csv path.
    #[arg(long)]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct StatsArg {
    /// JSON file with `sigma_pp`, `sigma_qq`, `sigma_pq` arrays (defaults: 1, 1, 0.5).
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub stats: StatsArg,
    #[arg(long, default_value = "dc")]
    pub model: ModelKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value = "auto")]
    pub estimator: Estimator,
    /// Fixed λ for glasso; by default `0.5·√(ln d / n)`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long)]
    pub diagonal_penalized: bool,
    /// Output JSON; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// `exact` (needs --grid and --model) or a concentration JSON file.
    #[arg(long)]
    pub conc: String,
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub stats: StatsArg,
    #[arg(long, default_value = "dc")]
    pub model: ModelKind,
    #[arg(long)]
    pub algo: Algorithm,
    /// τ₁ (> 0) for counting or τ₂ (< 0) for thresholding, on the
    /// unit-diagonal scale; or `auto` / `gap`.
    #[arg(long, default_value = "auto")]
    pub tau: Threshold,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub stats: StatsArg,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON config mirroring the experiment spec; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// Comma-separated sample counts; `exact` uses the analytical matrix.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<SampleSize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<Threshold>,
    /// Results CSV; also writes `<out>.summary.csv` and `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GridInfo {
    /// All buses including the reference.
    buses: usize,
    non_reference_buses: usize,
    reference: usize,
    lines: usize,
    /// `null` for radial grids.
    girth: Option<usize>,
    radial: bool,
    triangle_edges: Vec<(usize, usize)>,
    hash: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn load_stats(arg: &StatsArg, grid: &Grid, default: InjectionStats) -> Result<InjectionStats> {
    let Some(path) = &arg.stats else {
        return Ok(default);
    };
    let stats: InjectionStats = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    stats.validate()?;
    if stats.len() != grid.dim() {
        return Err(Error::Precondition(format!(
            "statistics cover {} buses, grid has {} non-reference buses",
            stats.len(),
            grid.dim()
        )));
    }
    Ok(stats)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn grid_command(cmd: &GridCommand, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        GridCommand::Validate(arg) => {
            let (grid, _) = load_grid(&arg.grid)?;
            let msg = serde_json::json!({"valid": true, "buses": grid.bus_count(), "lines": grid.lines().len()});
            writeln!(stdout, "{msg}")?;
        }
        GridCommand::Info(arg) => {
            let (grid, _) = load_grid(&arg.grid)?;
            let info = GridInfo {
                buses: grid.bus_count(),
                non_reference_buses: grid.dim(),
                reference: grid.reference(),
                lines: grid.lines().len(),
                girth: grid.girth(),
                radial: grid.is_radial(),
                triangle_edges: grid.triangle_edges(),
                hash: grid.content_hash(),
            };
            writeln!(stdout, "{}", serde_json::to_string_pretty(&info)?)?;
        }
    }
    Ok(())
}

fn sample_command(args: &SampleArgs) -> Result<()> {
    let (grid, default) = load_grid(&args.grid)?;
    let stats = load_stats(&args.stats, &grid, default)?;
    let set = generate_voltage_samples(&grid, &stats, args.model, args.n, args.seed)?;
    set.write_csv(std::fs::File::create(&args.out)?)?;
    std::fs::write(
        meta_path(&args.out),
        serde_json::to_string_pretty(&set.metadata(&grid))?,
    )?;
    Ok(())
}

fn read_samples(path: &Path) -> Result<SampleSet> {
    #[derive(serde::Deserialize)]
    struct Seed {
        seed: u64,
    }
    let seed = std::fs::read_to_string(meta_path(path))
        .ok()
        .and_then(|t| serde_json::from_str::<Seed>(&t).ok())
        .map_or(0, |m| m.seed);
    SampleSet::read_csv(std::fs::File::open(path)?, seed)
}

fn estimate_command(args: &EstimateArgs, stdout: &mut dyn Write) -> Result<()> {
    let samples = read_samples(&args.samples)?;
    let base = GlassoConfig {
        lambda: args.lambda.unwrap_or(0.0),
        tol: args.tol,
        max_iters: args.max_iters,
        diagonal_penalized: args.diagonal_penalized,
    };
    base.validate()?;
    let est = match (args.estimator, args.lambda) {
        (Estimator::Glasso, Some(_)) => graphical_lasso_standardized(&sample_covariance(&samples)?, &base)?,
        (Estimator::Direct, _) => invert_covariance(&sample_covariance(&samples)?)?,
        (estimator, _) => estimate(&samples, estimator, &base)?,
    };
    let mut file = est.to_file(&samples.labels)?;
    file.samples = Some(samples.len());
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&file)?, stdout)
}

fn learn_command(args: &LearnArgs, stdout: &mut dyn Write) -> Result<()> {
    let (conc, samples) = if args.conc == "exact" {
        let grid_name = args
            .grid
            .as_deref()
            .ok_or_else(|| Error::Precondition("--conc exact needs --grid".into()))?;
        let (grid, default) = load_grid(grid_name)?;
        let stats = load_stats(&args.stats, &grid, default)?;
        (analytic_concentration(&grid, &stats, args.model)?, None)
    } else {
        let file: ConcentrationFile = serde_json::from_str(&std::fs::read_to_string(&args.conc)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", args.conc)))?;
        (file.to_concentration()?, file.samples)
    };

    let learned = learn_with(&conc, args.algo, args.tau, samples)?;
    emit(args.out.as_deref(), &learned.to_json_string(), stdout)
}

fn certify_command(args: &CertifyArgs, stdout: &mut dyn Write) -> Result<()> {
    let (grid, default) = load_grid(&args.grid)?;
    let stats = load_stats(&args.stats, &grid, default)?;
    let report = check_triangle_sufficiency(&grid, &stats)?;
    match &args.out {
        Some(path) => report.write_csv(std::fs::File::create(path)?),
        None => report.write_csv(stdout),
    }
}

fn experiment_command(args: &ExperimentArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_json_file(path)?,
        None => {
            let missing = |what: &str| Error::Precondition(format!("--{what} is required without --config"));
            ExperimentSpec::new(
                args.grid.as_deref().ok_or_else(|| missing("grid"))?,
                args.model.ok_or_else(|| missing("model"))?,
                args.algo.ok_or_else(|| missing("algo"))?,
                args.n.clone().ok_or_else(|| missing("n"))?,
                args.trials.unwrap_or(1),
            )
        }
    };
    if let Some(g) = &args.grid {
        spec.grid = g.clone();
    }
    if let Some(m) = args.model {
        spec.model = m;
    }
    if let Some(a) = args.algo {
        spec.algorithm = a;
    }
    if let Some(e) = args.estimator {
        spec.estimator = e;
    }
    if let Some(n) = &args.n {
        spec.sample_counts = n.clone();
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(t) = args.tau {
        spec.threshold = t;
    }
    spec.apply_env_overrides()?;

    let result = run_experiment(&spec)?;
    let paths = result.write_all(&args.out)?;
    let summary = serde_json::json!({
        "records": result.records.len(),
        "summary": result.summary,
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Grid(cmd) => grid_command(cmd, stdout),
        Command::Sample(args) => sample_command(args),
        Command::Estimate(args) => estimate_command(args, stdout),
        Command::Learn(args) => learn_command(args, stdout),
        Command::Certify(args) => certify_command(args, stdout),
        Command::Experiment(args) => experiment_command(args, stdout),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for command failures, 2 for usage errors.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let report = ErrorReport {
                error: "usage",
                message: e.to_string().trim().to_string(),
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&report).unwrap_or_default());
            return 2;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&report).unwrap_or_default());
            1
        }
    }
}
