//! Neighborhood counting on a girth-7 grid: build the graphical model, merge
//! LC variables into per-bus hybrid nodes, then count.

use gridtopo::harness::builtin_grid;
use gridtopo::powerflow::{analytic_concentration, ModelKind};
use gridtopo::topology::{
    build_graphical_model, edge_errors, hybridize, learn_by_counting, relative_threshold, EXACT_RELATIVE_THRESHOLD,
};

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("loopy20_c7")?;
    let conc = analytic_concentration(&grid, &stats, ModelKind::Lc)?;
    let tau1 = relative_threshold(conc.matrix(), EXACT_RELATIVE_THRESHOLD);
    let gm = build_graphical_model(&conc, tau1)?;
    let hybrid = hybridize(&gm)?;
    println!(
        "{} variables, {} graphical-model edges, {} hybrid edges, {} true lines",
        gm.labels().len(),
        gm.edge_count(),
        hybrid.edge_count(),
        grid.non_reference_edges().len()
    );

    let learned = learn_by_counting(&hybrid)?;
    println!("{:?}", edge_errors(&learned, &grid)?);
    println!("{}", learned.to_json_string());
    Ok(())
}
