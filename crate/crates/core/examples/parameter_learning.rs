//! Line susceptances from the phase-angle covariance when the active-power
//! injection variances are known.

use gridtopo::estimation::sample_covariance;
use gridtopo::harness::builtin_grid;
use gridtopo::powerflow::{analytic_covariance, ModelKind};
use gridtopo::sampling::generate_voltage_samples;
use gridtopo::topology::learn_parameters;

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("radial20")?;
    let buses = grid.non_reference_buses();

    let exact = learn_parameters(&analytic_covariance(&grid, &stats, ModelKind::Dc)?, stats.sigma_pp())?;
    let sampled = {
        let samples = generate_voltage_samples(&grid, &stats, ModelKind::Dc, 50_000, 8)?;
        learn_parameters(&sample_covariance(&samples)?, stats.sigma_pp())?
    };
    let sampled = sampled.bus_susceptances(&buses);

    println!("{:>7} {:>10} {:>10} {:>10}", "line", "true β", "exact", "n=50000");
    for (&(i, j), &beta) in &exact.bus_susceptances(&buses) {
        let line = grid.line_between(i, j).expect("learned edge is a line");
        let truth = line.x / (line.x * line.x + line.r * line.r);
        // Sampled estimates are dense; only true lines are shown.
        let noisy = sampled.get(&(i, j)).copied().unwrap_or(0.0);
        println!("{:>3}-{:<3} {truth:>10.4} {beta:>10.4} {noisy:>10.4}", i, j);
    }
    Ok(())
}
