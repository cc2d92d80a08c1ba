//! The support of the DC concentration matrix: nonzero exactly for bus pairs
//! at most two hops apart once the reference bus is removed.

use gridtopo::harness::{builtin_grid, BUILTIN_GRIDS};
use gridtopo::linalg;
use gridtopo::powerflow::{analytic_concentration, ModelKind};

fn main() -> gridtopo::Result<()> {
    for name in BUILTIN_GRIDS {
        let (grid, stats) = builtin_grid(name)?;
        let conc = analytic_concentration(&grid, &stats, ModelKind::Dc)?;
        let m = conc.matrix();
        let cut = 1e-9 * linalg::max_abs(m);
        let dist = grid.reduced_distances();

        let (mut nonzero, mut mismatched) = (0, 0);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let is_nonzero = m[(i, j)].abs() > cut;
                nonzero += is_nonzero as usize;
                if is_nonzero != matches!(dist[i][j], Some(1 | 2)) {
                    mismatched += 1;
                }
            }
        }
        println!(
            "{name:>10}: {} buses, {} lines, girth {:?}, {nonzero} nonzero pairs, {mismatched} off the two-hop pattern",
            grid.bus_count(),
            grid.lines().len(),
            grid.girth(),
        );
    }
    Ok(())
}
