//! Which IEEE 14-bus triangle edges are guaranteed to keep a negative DC
//! concentration entry, and by which sufficient condition.

use gridtopo::harness::builtin_grid;
use gridtopo::topology::check_triangle_sufficiency;

fn main() -> gridtopo::Result<()> {
    let (grid, stats) = builtin_grid("ieee14")?;
    let report = check_triangle_sufficiency(&grid, &stats)?;
    for rec in &report.records {
        println!(
            "{:>2}-{:<2} common {:?}: {} {} (margin {:+.3})",
            rec.edge.0,
            rec.edge.1,
            rec.common,
            rec.certificate.as_str(),
            if rec.satisfied { "holds" } else { "fails" },
            rec.margin
        );
    }
    println!("{}/{} edges certified", report.satisfied_count(), report.records.len());
    report.write_csv(std::io::stdout())
}
