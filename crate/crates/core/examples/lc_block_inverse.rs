//! Closed-form LC concentration against a numeric inverse of the voltage
//! covariance.

use gridtopo::harness::builtin_grid;
use gridtopo::linalg;
use gridtopo::powerflow::{lc_concentration, lc_voltage_covariance, LcModel, VarKind};

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("ieee14")?;
    let model = LcModel::new(&grid)?;
    let closed = lc_concentration(&model, &stats)?;
    let numeric = linalg::spd_inverse(&lc_voltage_covariance(&model, &stats)?, "LC covariance")?;

    println!("variables: {}", closed.labels().len());
    println!(
        "max relative deviation: {:.2e}",
        linalg::max_rel_diff(closed.matrix(), &numeric)
    );

    // Off-diagonal blocks are transposes of each other.
    let vt = closed.block(VarKind::V, VarKind::Theta)?;
    let tv = closed.block(VarKind::Theta, VarKind::V)?;
    println!("J_vθ vs J_θvᵀ: {:.2e}", linalg::max_rel_diff(&vt, &tv.transpose()));
    Ok(())
}
