//! Bundled test grids and the sample-size sweep used to measure how learning
//! accuracy improves with more measurements.

mod experiment;

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::powerflow::InjectionStats;

pub use experiment::{
    learn_with, run_experiment, ExperimentResult, ExperimentSpec, SampleSize, SummaryRow, Threshold, TrialRecord,
    SEED_ENV_VAR,
};

pub const BUILTIN_GRIDS: [&str; 4] = ["radial20", "loopy20_c4", "loopy20_c7", "ieee14"];

/// Default per-bus injection statistics: `σ_pp = σ_qq = 1`, `σ_pq = 0.5`.
pub const DEFAULT_SIGMA_PP: f64 = 1.0;
pub const DEFAULT_SIGMA_QQ: f64 = 1.0;
pub const DEFAULT_SIGMA_PQ: f64 = 0.5;

const RADIAL20: &str = include_str!("../../data/radial20.json");
const LOOPY20_C4: &str = include_str!("../../data/loopy20_c4.json");
const LOOPY20_C7: &str = include_str!("../../data/loopy20_c7.json");
const IEEE14: &str = include_str!("../../data/ieee14.csv");

pub fn default_stats(grid: &Grid) -> InjectionStats {
    InjectionStats::uniform(grid.dim(), DEFAULT_SIGMA_PP, DEFAULT_SIGMA_QQ, DEFAULT_SIGMA_PQ)
        .expect("default statistics are positive definite")
}

fn expect_girth(name: &str, grid: Grid, girth: Option<usize>) -> Result<Grid> {
    if grid.girth() != girth {
        return Err(Error::Structure(format!(
            "bundled grid {name} has girth {:?}, expected {girth:?}",
            grid.girth()
        )));
    }
    Ok(grid)
}

/// One of the bundled grids with default injection statistics.
///
/// * `radial20`: a 20-bus radial feeder plus the reference (substation) bus.
/// * `loopy20_c4`, `loopy20_c7`: `radial20` with chords added so the
///   shortest cycle has length 4 and 7; checked on load.
/// * `ieee14`: the IEEE 14-bus case, reference at IEEE bus 1 (id 0), other
///   buses renumbered to `bus - 1`.
pub fn builtin_grid(name: &str) -> Result<(Grid, InjectionStats)> {
    let grid = match name {
        "radial20" => expect_girth(name, Grid::from_json_str(RADIAL20)?, None)?,
        "loopy20_c4" => expect_girth(name, Grid::from_json_str(LOOPY20_C4)?, Some(4))?,
        "loopy20_c7" => expect_girth(name, Grid::from_json_str(LOOPY20_C7)?, Some(7))?,
        "ieee14" => Grid::from_line_csv(IEEE14.as_bytes(), Some(1))?,
        other => return Err(Error::UnknownGrid(other.to_string())),
    };
    let stats = default_stats(&grid);
    Ok((grid, stats))
}

/// A built-in grid name, or a path to a grid JSON file or a `from,to,r,x`
/// line-data CSV.
pub fn load_grid(spec: &str) -> Result<(Grid, InjectionStats)> {
    if BUILTIN_GRIDS.contains(&spec) {
        return builtin_grid(spec);
    }
    let path = Path::new(spec);
    let grid = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Grid::from_json_file(path)?,
        Some("csv") => Grid::from_line_csv(std::fs::File::open(path)?, None)?,
        _ => return Err(Error::UnknownGrid(spec.to_string())),
    };
    let stats = default_stats(&grid);
    Ok((grid, stats))
}
