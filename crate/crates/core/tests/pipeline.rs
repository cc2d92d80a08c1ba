use gridtopo::estimation::{
    estimate, graphical_lasso_standardized, invert_covariance, sample_covariance, select_lambda, ConcentrationFile,
    Estimator, GlassoConfig, Method,
};
use gridtopo::harness::{builtin_grid, run_experiment, ExperimentSpec, SampleSize, BUILTIN_GRIDS};
use gridtopo::linalg;
use gridtopo::powerflow::{analytic_concentration, analytic_covariance, ModelKind};
use gridtopo::sampling::{generate_voltage_samples, SampleSet};
use gridtopo::topology::{edge_errors, learn_by_thresholding, Algorithm};

#[test]
fn inverting_the_exact_covariance_gives_the_closed_form() {
    for name in BUILTIN_GRIDS {
        let (g, s) = builtin_grid(name).unwrap();
        for model in [ModelKind::Dc, ModelKind::Lc] {
            let cov = analytic_covariance(&g, &s, model).unwrap();
            let inverted = invert_covariance(&cov).unwrap();
            let closed = analytic_concentration(&g, &s, model).unwrap();
            let dev = linalg::max_rel_diff(&inverted.matrix, closed.matrix());
            assert!(dev < 1e-8, "{name}/{model}: {dev:e}");
        }
    }
}

#[test]
fn dc_sample_covariance_is_within_three_standard_errors() {
    let (g, s) = builtin_grid("loopy20_c4").unwrap();
    let n = 50_000;
    let samples = generate_voltage_samples(&g, &s, ModelKind::Dc, n, 21).unwrap();
    let empirical = sample_covariance(&samples).unwrap();
    let exact = analytic_covariance(&g, &s, ModelKind::Dc).unwrap();
    let d = exact.nrows();
    for j in 0..d {
        for i in 0..=j {
            let se = ((exact[(i, i)] * exact[(j, j)] + exact[(i, j)].powi(2)) / n as f64).sqrt();
            let z = (empirical[(i, j)] - exact[(i, j)]).abs() / se;
            assert!(z < 3.5, "({i},{j}) z = {z:.2}");
        }
    }
}

#[test]
fn glasso_on_grid_data_satisfies_kkt() {
    // Feeder angles are nearly collinear (condition number ~1e5 on the
    // correlation scale), which is the hard case for coordinate descent.
    let (g, s) = builtin_grid("radial20").unwrap();
    let n = 10_000;
    let samples = generate_voltage_samples(&g, &s, ModelKind::Dc, n, 42).unwrap();
    let cov = sample_covariance(&samples).unwrap();
    let scale: Vec<f64> = cov.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
    let corr = linalg::scale_symmetric(&cov, &scale);
    let lambda = select_lambda(n, 20).unwrap();
    let config = GlassoConfig {
        max_iters: 5_000,
        ..GlassoConfig::with_lambda(lambda)
    };
    let est = graphical_lasso_standardized(&cov, &config).unwrap();
    assert!(est.converged());
    let theta = linalg::scale_symmetric(
        &est.matrix,
        &cov.diagonal().iter().map(|v| v.sqrt()).collect::<Vec<_>>(),
    );
    let w = linalg::spd_inverse(&theta, "theta").unwrap();
    for i in 0..20 {
        for j in 0..20 {
            let g = corr[(i, j)] - w[(i, j)];
            let t = theta[(i, j)];
            let r = if i == j {
                g.abs()
            } else if t == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * t.signum()).abs()
            };
            assert!(r < 1e-5, "({i},{j}) residual {r:e}");
        }
    }
}

#[test]
fn auto_estimator_switches_on_sample_count() {
    let (g, s) = builtin_grid("radial20").unwrap();
    let few = generate_voltage_samples(&g, &s, ModelKind::Dc, 60, 1).unwrap();
    let many = generate_voltage_samples(&g, &s, ModelKind::Dc, 100, 1).unwrap();
    let config = GlassoConfig::default();
    assert_eq!(estimate(&few, Estimator::Auto, &config).unwrap().method, Method::Glasso);
    assert_eq!(
        estimate(&many, Estimator::Auto, &config).unwrap().method,
        Method::Direct
    );
    // Fewer samples than variables: the sample covariance is singular.
    let tiny = generate_voltage_samples(&g, &s, ModelKind::Dc, 10, 1).unwrap();
    assert!(estimate(&tiny, Estimator::Direct, &config).is_err());
    assert_eq!(
        estimate(&tiny, Estimator::Auto, &config).unwrap().method,
        Method::Glasso
    );
}

#[test]
fn sample_csv_and_concentration_json_round_trip() {
    let (g, s) = builtin_grid("ieee14").unwrap();
    let samples = generate_voltage_samples(&g, &s, ModelKind::Lc, 300, 5).unwrap();
    let mut csv = Vec::new();
    samples.write_csv(&mut csv).unwrap();
    let back = SampleSet::read_csv(csv.as_slice(), 5).unwrap();
    assert_eq!(back.labels, samples.labels);
    assert_eq!(back.samples, samples.samples);

    let conc = estimate(&samples, Estimator::Direct, &GlassoConfig::default())
        .unwrap()
        .into_concentration(samples.labels.clone())
        .unwrap();
    let file = ConcentrationFile::from_concentration(&conc);
    let json = serde_json::to_string(&file).unwrap();
    let parsed: ConcentrationFile = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.to_concentration().unwrap(), conc);
}

#[test]
fn exact_sweep_recovers_radial20() {
    let spec = ExperimentSpec::new(
        "radial20",
        ModelKind::Dc,
        Algorithm::Thresholding,
        vec![SampleSize::Exact],
        1,
    );
    let result = run_experiment(&spec).unwrap();
    assert_eq!(result.mean_errors(), [0.0]);
}

#[test]
fn experiments_are_byte_reproducible() {
    let counts = vec![SampleSize::Finite(300), SampleSize::Finite(3000)];
    let mut spec = ExperimentSpec::new("loopy20_c4", ModelKind::Lc, Algorithm::Thresholding, counts, 6);
    spec.seed = 19;
    let csv = |spec: &ExperimentSpec| {
        let mut out = Vec::new();
        run_experiment(spec).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let first = csv(&spec);
    assert_eq!(first, csv(&spec));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 1 + 2 * 6);
}

#[test]
fn failing_trials_are_recorded_not_fatal() {
    // Counting carries no guarantee on a grid with triangles.
    let spec = ExperimentSpec::new("ieee14", ModelKind::Dc, Algorithm::Counting, vec![SampleSize::Exact], 2);
    let result = run_experiment(&spec).unwrap();
    assert_eq!(result.records.len(), 2);
    for rec in &result.records {
        assert!(rec.failure.is_some() || rec.errors.total > 0, "{rec:?}");
    }
}

#[test]
fn ieee14_sampled_errors_settle_at_the_exact_value() {
    let (g, s) = builtin_grid("ieee14").unwrap();
    let exact = analytic_concentration(&g, &s, ModelKind::Dc).unwrap();
    let floor = edge_errors(&learn_by_thresholding(&exact, -1e-9).unwrap(), &g).unwrap();
    let mut spec = ExperimentSpec::new(
        "ieee14",
        ModelKind::Dc,
        Algorithm::Thresholding,
        vec![SampleSize::Finite(200_000)],
        3,
    );
    spec.seed = 3;
    for rec in run_experiment(&spec).unwrap().records {
        assert_eq!(rec.errors, floor);
    }
}
