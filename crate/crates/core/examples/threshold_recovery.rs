//! Sign thresholding on exact and sampled concentration matrices.

use gridtopo::estimation::{estimate, Estimator, GlassoConfig};
use gridtopo::harness::builtin_grid;
use gridtopo::powerflow::{analytic_concentration, ModelKind};
use gridtopo::sampling::generate_voltage_samples;
use gridtopo::topology::{
    edge_errors, learn_by_thresholding, learn_from_scores, noise_floor_threshold, standardized_edge_scores,
    NOISE_FLOOR_ALPHA,
};

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("loopy20_c4")?;
    for model in [ModelKind::Dc, ModelKind::Lc] {
        let exact = analytic_concentration(&grid, &stats, model)?;
        let learned = learn_by_thresholding(&exact, -1e-9)?;
        println!(
            "{model} exact: {} edges, {:?}",
            learned.edges.len(),
            edge_errors(&learned, &grid)?
        );

        for n in [500, 2_000, 10_000] {
            let samples = generate_voltage_samples(&grid, &stats, model, n, 1)?;
            let conc = estimate(&samples, Estimator::Auto, &GlassoConfig::default())?
                .into_concentration(samples.labels.clone())?;
            let scores = standardized_edge_scores(&conc)?;
            let tau2 = -noise_floor_threshold(n, scores.nrows(), NOISE_FLOOR_ALPHA);
            let learned = learn_from_scores(&scores, conc.buses(), tau2)?;
            println!("{model} n={n:>6} τ₂={tau2:.4}: {:?}", edge_errors(&learned, &grid)?);
        }
    }
    Ok(())
}
