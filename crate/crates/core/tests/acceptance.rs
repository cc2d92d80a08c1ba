//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test --test acceptance`. All random inputs use fixed seeds.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use gridtopo::estimation::{graphical_lasso, invert_covariance, sample_covariance, GlassoConfig};
use gridtopo::grid::{reduced_laplacian, Grid, Line, WeightKind};
use gridtopo::harness::{builtin_grid, run_experiment, ExperimentSpec, SampleSize, BUILTIN_GRIDS};
use gridtopo::linalg;
use gridtopo::powerflow::{
    analytic_concentration, analytic_covariance, lc_concentration, lc_voltage_covariance, InjectionStats, LcModel,
    ModelKind,
};
use gridtopo::sampling::generate_voltage_samples;
use gridtopo::topology::{
    build_graphical_model, check_triangle_sufficiency, edge_errors, learn_by_counting_from_model,
    learn_by_thresholding, learn_parameters, relative_threshold, Algorithm, EXACT_RELATIVE_THRESHOLD,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Name, time budget, check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn builtins() -> Vec<(&'static str, Grid, InjectionStats)> {
    BUILTIN_GRIDS
        .iter()
        .map(|&name| {
            let (g, s) = builtin_grid(name).expect("builtin grid");
            (name, g, s)
        })
        .collect()
}

/// Zero pattern of `m` with entries below `1e-9 · max` treated as zero.
fn support(m: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let cut = 1e-9 * linalg::max_abs(m);
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs() > cut).collect())
        .collect()
}

fn structure_theorem() -> Outcome {
    let mut problems = Vec::new();
    for (name, g, s) in builtins() {
        let dist = g.reduced_distances();
        let n = g.dim();
        let near = |i: usize, j: usize| i == j || matches!(dist[i][j], Some(1 | 2));

        let dc = analytic_concentration(&g, &s, ModelKind::Dc).unwrap();
        let sup = support(dc.matrix());
        for (i, row) in sup.iter().enumerate() {
            for (j, &nonzero) in row.iter().enumerate() {
                if nonzero != near(i, j) {
                    problems.push(format!("{name} DC ({i},{j})"));
                }
            }
        }
        let lc = analytic_concentration(&g, &s, ModelKind::Lc).unwrap();
        let sup = support(lc.matrix());
        for bi in 0..2 {
            for bj in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && sup[bi * n + i][bj * n + j] != near(i, j) {
                            problems.push(format!("{name} LC block ({bi},{bj}) ({i},{j})"));
                        }
                    }
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "support = pairs within two hops on all 4 grids, DC and all 4 LC blocks".to_string()
        } else {
            format!("{} mismatches, first: {}", problems.len(), problems[0])
        },
    )
}

fn block_inverse() -> Outcome {
    let mut worst = 0.0_f64;
    let mut worst_name = "";
    for (name, g, s) in builtins() {
        let model = LcModel::new(&g).unwrap();
        let closed = lc_concentration(&model, &s).unwrap();
        let cov = lc_voltage_covariance(&model, &s).unwrap();
        let numeric = cov.clone().try_inverse().expect("covariance invertible");
        let dev = linalg::max_rel_diff(closed.matrix(), &numeric);
        if dev > worst {
            worst = dev;
            worst_name = name;
        }
    }
    outcome(
        worst < 1e-8,
        format!("max relative deviation {worst:.2e} ({worst_name}), limit 1e-8"),
    )
}

fn exact_thresholding() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["radial20", "loopy20_c4"] {
        let (g, s) = builtin_grid(name).unwrap();
        for model in [ModelKind::Dc, ModelKind::Lc] {
            let conc = analytic_concentration(&g, &s, model).unwrap();
            let tau2 = -1e-6 * linalg::max_abs(conc.matrix());
            let errors = edge_errors(&learn_by_thresholding(&conc, tau2).unwrap(), &g).unwrap();
            pass &= errors.total == 0;
            lines.push(format!("{name}/{model}={}", errors.total));
        }
    }
    outcome(pass, format!("total errors {}", lines.join(", ")))
}

fn exact_counting() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["radial20", "loopy20_c7"] {
        let (g, s) = builtin_grid(name).unwrap();
        for model in [ModelKind::Dc, ModelKind::Lc] {
            let conc = analytic_concentration(&g, &s, model).unwrap();
            let tau1 = relative_threshold(conc.matrix(), EXACT_RELATIVE_THRESHOLD);
            let gm = build_graphical_model(&conc, tau1).unwrap();
            match learn_by_counting_from_model(&gm).and_then(|t| edge_errors(&t, &g)) {
                Ok(e) => {
                    pass &= e.total == 0;
                    lines.push(format!("{name}/{model}={}", e.total));
                }
                Err(e) => {
                    pass = false;
                    lines.push(format!("{name}/{model} failed: {e}"));
                }
            }
        }
    }
    outcome(pass, format!("total errors {}", lines.join(", ")))
}

fn sampled_convergence() -> Outcome {
    let counts: Vec<SampleSize> = [500, 1000, 2000, 5000, 10000]
        .into_iter()
        .map(SampleSize::Finite)
        .collect();
    let regimes = [
        ("radial20", Algorithm::Thresholding),
        ("loopy20_c4", Algorithm::Thresholding),
        ("radial20", Algorithm::Counting),
        ("loopy20_c7", Algorithm::Counting),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (grid, algo) in regimes {
        for model in [ModelKind::Dc, ModelKind::Lc] {
            let mut spec = ExperimentSpec::new(grid, model, algo, counts.clone(), 20);
            spec.seed = 7;
            let result = run_experiment(&spec).unwrap();
            let means = result.mean_errors();
            let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
            let ok = inversions <= 1 && *means.last().unwrap() == 0.0;
            pass &= ok;
            let shown: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
            lines.push(format!(
                "{grid}/{model}/{algo} [{}]{}",
                shown.join(" "),
                if ok { "" } else { " <- FAIL" }
            ));
        }
    }
    outcome(
        pass,
        format!("mean errors at n=500..10000:\n      {}", lines.join("\n      ")),
    )
}

fn triangle_regime() -> Outcome {
    let exact = {
        let mut spec = ExperimentSpec::new(
            "ieee14",
            ModelKind::Dc,
            Algorithm::Thresholding,
            vec![SampleSize::Exact],
            1,
        );
        spec.seed = 11;
        run_experiment(&spec).unwrap().records[0].errors.total
    };
    let mut spec = ExperimentSpec::new(
        "ieee14",
        ModelKind::Dc,
        Algorithm::Thresholding,
        vec![
            SampleSize::Finite(1000),
            SampleSize::Finite(10_000),
            SampleSize::Finite(100_000),
        ],
        10,
    );
    spec.seed = 11;
    let result = run_experiment(&spec).unwrap();
    let at_large: Vec<usize> = result
        .records
        .iter()
        .filter(|r| r.n == SampleSize::Finite(100_000))
        .map(|r| r.errors.total)
        .collect();
    let agree = at_large.iter().filter(|&&t| t == exact).count();
    let means: Vec<String> = result.mean_errors().iter().map(|m| format!("{m:.2}")).collect();
    outcome(
        agree >= 9,
        format!(
            "exact-matrix errors {exact}; n=1e5 agreement {agree}/10; means at n=1e3,1e4,1e5 [{}]",
            means.join(" ")
        ),
    )
}

/// Random connected grid on `n` buses (bus 0 is the reference) with at least
/// one triangle away from the reference.
fn random_triangle_grid(rng: &mut ChaCha8Rng) -> (Grid, InjectionStats) {
    loop {
        let n = rng.random_range(4..=12);
        let mut edges = BTreeSet::new();
        for b in 1..n {
            let parent = rng.random_range(0..b);
            edges.insert((parent, b));
        }
        let extra = rng.random_range(1..=n);
        for _ in 0..extra {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        // Close a triangle on a random path i-k-j of non-reference buses.
        let list: Vec<(usize, usize)> = edges.iter().copied().filter(|&(i, _)| i != 0).collect();
        for &(a, b) in &list {
            for &(c, d) in &list {
                let shared = [(a, c, b, d), (a, d, b, c), (b, c, a, d), (b, d, a, c)];
                for (x, y, p, q) in shared {
                    if x == y && p != q && rng.random_bool(0.05) {
                        edges.insert((p.min(q), p.max(q)));
                    }
                }
            }
        }
        let uniform = rng.random_bool(0.3);
        let equal_sigma = uniform || rng.random_bool(0.4);
        let per_length = rng.random_range(1.0..20.0);
        let lines: Vec<Line> = edges
            .iter()
            .map(|&(i, j)| {
                let r = if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.001..0.1)
                };
                let x = rng.random_range(0.005..0.2);
                let line = Line::new(i, j, r, x);
                if uniform {
                    let beta = x / (x * x + r * r);
                    line.with_length(beta / per_length)
                } else {
                    line
                }
            })
            .collect();
        let grid = Grid::new(0, &(0..n).collect::<Vec<_>>(), lines).unwrap();
        let has_inner_triangle = grid.triangle_edges().iter().any(|&(i, j)| {
            i != 0
                && grid
                    .neighbors(i)
                    .unwrap()
                    .intersection(&grid.neighbors(j).unwrap())
                    .any(|&k| k != 0)
        });
        if !has_inner_triangle {
            continue;
        }
        let d = grid.dim();
        let sigma: Vec<f64> = if equal_sigma {
            vec![rng.random_range(0.2..3.0); d]
        } else {
            (0..d).map(|_| rng.random_range(0.2..3.0)).collect()
        };
        let stats = InjectionStats::new(sigma, vec![1.0; d], vec![0.0; d]).unwrap();
        return (grid, stats);
    }
}

/// `H Σ_p⁻¹ H` by a plain triple loop.
fn dc_concentration_oracle(grid: &Grid, stats: &InjectionStats) -> DMatrix<f64> {
    let h = reduced_laplacian(grid, WeightKind::Susceptance).unwrap().matrix;
    let n = h.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| h[(i, k)] * h[(k, j)] / stats.sigma_pp()[k]).sum()
    })
}

fn certificates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut satisfied = 0;
    let mut violations = Vec::new();
    let mut kinds = BTreeSet::new();
    for _ in 0..200 {
        let (g, s) = random_triangle_grid(&mut rng);
        let report = check_triangle_sufficiency(&g, &s).unwrap();
        let oracle = dc_concentration_oracle(&g, &s);
        for rec in &report.records {
            let (i, j) = rec.edge;
            let entry = oracle[(g.matrix_index(i).unwrap(), g.matrix_index(j).unwrap())];
            for check in &rec.checks {
                checked += 1;
                if check.satisfied {
                    satisfied += 1;
                    kinds.insert(check.certificate.as_str());
                    if entry.is_nan() || entry >= 0.0 {
                        violations.push(format!("{:?} on ({i},{j}): entry {entry:e}", check.certificate));
                    }
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "200 grids, {checked} checks, {satisfied} satisfied (kinds: {}), {} violations{}",
            kinds.into_iter().collect::<Vec<_>>().join(","),
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

fn random_tree(rng: &mut ChaCha8Rng) -> (Grid, InjectionStats) {
    let n = rng.random_range(2..=30);
    let lines: Vec<Line> = (1..n)
        .map(|b| {
            let parent = rng.random_range(0..b);
            Line::new(parent, b, rng.random_range(0.0..0.1), rng.random_range(0.01..0.2))
        })
        .collect();
    let grid = Grid::new(0, &(0..n).collect::<Vec<_>>(), lines).unwrap();
    let d = grid.dim();
    let sigma: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..5.0)).collect();
    let stats = InjectionStats::new(sigma, vec![1.0; d], vec![0.0; d]).unwrap();
    (grid, stats)
}

fn parameter_learning() -> Outcome {
    let mut cases: Vec<(String, Grid, InjectionStats)> =
        builtins().into_iter().map(|(n, g, s)| (n.to_string(), g, s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..100 {
        let (g, s) = random_tree(&mut rng);
        cases.push((format!("tree{k}"), g, s));
    }
    let mut worst = 0.0_f64;
    let mut worst_name = String::new();
    let mut edge_mismatch = 0;
    for (name, g, s) in &cases {
        let cov = analytic_covariance(g, s, ModelKind::Dc).unwrap();
        let est = learn_parameters(&cov, s.sigma_pp()).unwrap();
        let h = reduced_laplacian(g, WeightKind::Susceptance).unwrap();
        let err = linalg::max_rel_diff(&est.h_beta, &h.matrix);
        if err > worst {
            worst = err;
            worst_name = name.clone();
        }
        let learned: BTreeSet<_> = est.bus_susceptances(&h.buses).keys().copied().collect();
        if learned != g.non_reference_edges() {
            edge_mismatch += 1;
        }
    }
    outcome(
        worst < 1e-6 && edge_mismatch == 0,
        format!(
            "{} grids, max relative error {worst:.2e} ({worst_name}), edge-set mismatches {edge_mismatch}",
            cases.len()
        ),
    )
}

fn glasso_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tol = GlassoConfig::default().tol;
    let mut worst_kkt = 0.0_f64;
    let mut worst_direct = 0.0_f64;
    let mut unconverged = 0;
    for _ in 0..50 {
        let d = rng.random_range(2..=12);
        let m = d + rng.random_range(1..=3 * d);
        let a = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        let cov = a.tr_mul(&a) / m as f64 + DMatrix::identity(d, d) * 0.05;
        let lambda = rng.random_range(0.005..0.2);
        let est = graphical_lasso(&cov, &GlassoConfig::with_lambda(lambda)).unwrap();
        if !est.converged() {
            unconverged += 1;
        }
        let w = linalg::spd_inverse(&est.matrix, "theta").unwrap();
        let g = &cov - w;
        for j in 0..d {
            for i in 0..d {
                let r = if i == j {
                    g[(i, i)].abs()
                } else if est.matrix[(i, j)] == 0.0 {
                    (g[(i, j)].abs() - lambda).max(0.0)
                } else {
                    (g[(i, j)] + lambda * est.matrix[(i, j)].signum()).abs()
                };
                worst_kkt = worst_kkt.max(r);
            }
        }
        let zero = graphical_lasso(&cov, &GlassoConfig::with_lambda(0.0)).unwrap();
        let direct = invert_covariance(&cov).unwrap();
        worst_direct = worst_direct.max(linalg::max_rel_diff(&zero.matrix, &direct.matrix));
    }
    outcome(
        worst_kkt <= 10.0 * tol && worst_direct < 1e-5 && unconverged == 0,
        format!(
            "50 covariances: max KKT residual {worst_kkt:.2e} (limit {:.0e}), λ=0 vs direct {worst_direct:.2e} (limit 1e-5), unconverged {unconverged}",
            10.0 * tol
        ),
    )
}

fn monte_carlo() -> Outcome {
    let (g, s) = builtin_grid("radial20").unwrap();
    let n = 100_000;
    let samples = generate_voltage_samples(&g, &s, ModelKind::Lc, n, 10).unwrap();
    let empirical = sample_covariance(&samples).unwrap();
    let exact = analytic_covariance(&g, &s, ModelKind::Lc).unwrap();
    let d = exact.nrows();
    let mut outside = 0;
    let mut entries = 0;
    let mut worst = 0.0_f64;
    for j in 0..d {
        for i in 0..=j {
            let se = ((exact[(i, i)] * exact[(j, j)] + exact[(i, j)].powi(2)) / n as f64).sqrt();
            let z = (empirical[(i, j)] - exact[(i, j)]).abs() / se;
            worst = worst.max(z);
            entries += 1;
            if z > 3.0 {
                outside += 1;
            }
        }
    }
    outcome(
        outside == 0,
        format!("{entries} entries, {outside} outside 3 SE, max |z| = {worst:.2}"),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 structure theorem", Duration::from_secs(1), structure_theorem),
        ("2 block-inverse identity", Duration::from_secs(1), block_inverse),
        (
            "3 exact recovery, thresholding",
            Duration::from_secs(1),
            exact_thresholding,
        ),
        ("4 exact recovery, counting", Duration::from_secs(1), exact_counting),
        ("5 sampled convergence", Duration::from_secs(120), sampled_convergence),
        ("6 triangle regime", Duration::from_secs(120), triangle_regime),
        ("7 sufficiency certificates", Duration::from_secs(30), certificates),
        ("8 parameter learning", Duration::from_secs(10), parameter_learning),
        ("9 glasso correctness", Duration::from_secs(60), glasso_correctness),
        ("10 Monte-Carlo consistency", Duration::from_secs(30), monte_carlo),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.2}s / budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
