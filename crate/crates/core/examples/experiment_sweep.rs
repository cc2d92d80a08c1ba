//! A small sample-size sweep written to CSV, summary CSV and JSON sidecar.

use gridtopo::harness::{run_experiment, ExperimentSpec, SampleSize};
use gridtopo::powerflow::ModelKind;
use gridtopo::topology::Algorithm;

fn main() -> gridtopo::Result<()> {
    let counts = [200, 1_000, 5_000].into_iter().map(SampleSize::Finite).collect();
    let mut spec = ExperimentSpec::new("radial20", ModelKind::Dc, Algorithm::Thresholding, counts, 10);
    spec.seed = 7;
    let result = run_experiment(&spec)?;

    for row in &result.summary {
        println!(
            "n={:>5}: mean {:.2} std {:.2} failures {}",
            row.n, row.mean, row.std, row.failures
        );
    }

    let out = std::env::temp_dir().join("gridtopo_sweep.csv");
    for path in result.write_all(&out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
