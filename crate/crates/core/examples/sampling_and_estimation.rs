//! Draw voltage samples, then estimate the concentration matrix three ways.

use gridtopo::estimation::{estimate, Estimator, GlassoConfig};
use gridtopo::harness::builtin_grid;
use gridtopo::linalg;
use gridtopo::powerflow::{analytic_concentration, ModelKind};
use gridtopo::sampling::generate_voltage_samples;

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("radial20")?;
    let exact = analytic_concentration(&grid, &stats, ModelKind::Dc)?.standardized()?;

    for n in [100, 1_000, 10_000] {
        let samples = generate_voltage_samples(&grid, &stats, ModelKind::Dc, n, 42)?;
        for estimator in [Estimator::Direct, Estimator::Glasso, Estimator::Auto] {
            let est = estimate(&samples, estimator, &GlassoConfig::default())?;
            let method = est.method;
            let conc = est.into_concentration(samples.labels.clone())?.standardized()?;
            let err = linalg::max_abs(&(conc.matrix() - exact.matrix()));
            println!("n={n:>6} {estimator:>6} ({method:?}): max |error| on unit-diagonal scale {err:.4}");
        }
    }
    Ok(())
}
