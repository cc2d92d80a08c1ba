//! Learning the operational topology of a power grid from nodal voltage
//! measurements.
//!
//! Voltages are linked to random power injections through linearized power
//! flow ([`powerflow`]): DC (phase angles only) or linear-coupled, LC
//! (magnitudes and angles). Their inverse covariance is sparse, with nonzeros
//! only between buses at most two hops apart, so the grid can be read off an
//! estimate of it ([`estimation`]) by neighborhood counting or by sign
//! thresholding ([`topology`]).
//!
//! ```
//! use gridtopo::harness::builtin_grid;
//! use gridtopo::powerflow::{analytic_concentration, ModelKind};
//! use gridtopo::topology::{edge_errors, learn_by_thresholding};
//!
//! let (grid, stats) = builtin_grid("radial20")?;
//! let conc = analytic_concentration(&grid, &stats, ModelKind::Dc)?;
//! let learned = learn_by_thresholding(&conc, -1e-9)?;
//! assert_eq!(edge_errors(&learned, &grid)?.total, 0);
//! # Ok::<(), gridtopo::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod powerflow;
pub mod sampling;
pub mod topology;

pub use error::{Error, Result};
pub use grid::{Grid, Line};
pub use powerflow::{ConcentrationMatrix, InjectionStats, ModelKind};
