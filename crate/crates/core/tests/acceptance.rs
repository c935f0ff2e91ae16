//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use mrrad::bounds::{
    labeled_expr_thm2, labeled_expr_thm3, labeled_size_thm2, labeled_size_thm3,
    unlabeled_expr_thm2, unlabeled_expr_thm3, unlabeled_size_thm2, unlabeled_size_thm3, BoundQuery,
};
use mrrad::complexity::{
    complexity_curve_with, elbow_select, log_grid, rad_bounds_base, rad_empirical_mc,
};
use mrrad::data::{gen_circles, split_labels_holdout};
use mrrad::deform::{DeformOperators, DeformedKernel};
use mrrad::learner::{
    empirical_penalty, solve_constrained, train_semi_deformed, train_semi_joint, train_supervised,
    zero_one_error,
};
use mrrad::{bandwidth_to_sigma, laplacian, Dataset, GramMatrix, GraphLaplacian, KernelSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const BASE_BANDWIDTH: f64 = 0.5;
const GRAPH_BANDWIDTH: f64 = 0.2;
const LAMBDA_A: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn clause(ok: bool, text: String) -> (bool, String) {
    (ok, format!("{text} [{}]", if ok { "ok" } else { "FAIL" }))
}

fn combine(clauses: Vec<(bool, String)>) -> Outcome {
    let pass = clauses.iter().all(|c| c.0);
    let detail = clauses
        .into_iter()
        .map(|c| c.1)
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, detail }
}

fn base_kernel() -> KernelSpec {
    KernelSpec::gaussian_bandwidth(BASE_BANDWIDTH).unwrap()
}

fn circles_graph(ds: &Dataset) -> GraphLaplacian {
    GraphLaplacian::build(ds.points(), bandwidth_to_sigma(GRAPH_BANDWIDTH)).unwrap()
}

/// Mean slope magnitude between the first and last grid points inside [lo, hi].
fn slope(mu: &[f64], v: &[f64], x: &[f64], lo: f64, hi: f64) -> f64 {
    let idx: Vec<usize> = (0..mu.len())
        .filter(|&i| mu[i] >= lo * (1.0 - 1e-9) && mu[i] <= hi * (1.0 + 1e-9))
        .collect();
    let (a, b) = (idx[0], idx[idx.len() - 1]);
    ((v[b] - v[a]) / (x[b] - x[a])).abs()
}

fn curve_shape() -> Outcome {
    let start = Instant::now();
    let ds = gen_circles(250, (1.0, 2.0), 0.05, 1).unwrap();
    let gl = circles_graph(&ds);
    let ops = Arc::new(
        DeformOperators::new(base_kernel(), ds.points().clone(), gl.matrix().clone()).unwrap(),
    );
    let labeled: Vec<usize> = (0..ds.len()).collect();
    let grid = log_grid(1e-3, 1.0, 25).unwrap();
    let curve = complexity_curve_with(1.0, &ops, &labeled, &grid).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let v0 = curve.upper_values[0];
    let norm: Vec<f64> = curve.upper_values.iter().map(|v| v / v0).collect();
    let logmu: Vec<f64> = grid.iter().map(|m| m.log10()).collect();
    let ratio = slope(&grid, &norm, &logmu, 1e-3, 0.1) / slope(&grid, &norm, &logmu, 0.2, 1.0);
    let violation = curve.max_monotonicity_violation();
    let elbow = curve.elbow_mu().unwrap_or(f64::NAN);
    let failures = curve.failures.iter().filter(|f| f.is_some()).count();
    combine(vec![
        clause(failures == 0, format!("{failures} failed grid points")),
        clause(
            violation <= 1e-10,
            format!("monotonicity violation {violation:.2e}"),
        ),
        clause(
            ratio >= 3.0,
            format!("log-axis slope ratio {ratio:.3} (need >= 3)"),
        ),
        clause(
            (0.1..=0.3).contains(&elbow),
            format!("elbow mu {elbow:.4} (need [0.1, 0.3])"),
        ),
        clause(secs <= 60.0, format!("{secs:.1}s")),
    ])
}

fn slice_separation() -> Outcome {
    let start = Instant::now();
    let ds = gen_circles(250, (1.0, 2.0), 0.05, 1).unwrap();
    let gl = circles_graph(&ds);
    let ops = Arc::new(
        DeformOperators::new(base_kernel(), ds.points().clone(), gl.matrix().clone()).unwrap(),
    );
    let reference = ds.points().rows(0, 1).into_owned();
    let ratio_at = |mu: f64| {
        let dk = DeformedKernel::with_operators(ops.clone(), mu).unwrap();
        let row = dk.cross(&reference, ds.points()).unwrap();
        let own: Vec<f64> = (1..250).map(|j| row[(0, j)]).collect();
        let other: Vec<f64> = (250..500).map(|j| row[(0, j)]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        mean(&other) / mean(&own)
    };
    let strong = ratio_at(0.2);
    let weak = ratio_at(0.02);
    let secs = start.elapsed().as_secs_f64();
    combine(vec![
        clause(
            strong < 0.2,
            format!("mu=0.2 opposite/own {strong:.4} (need < 0.2)"),
        ),
        clause(
            weak > 0.5,
            format!("mu=0.02 opposite/own {weak:.4} (need > 0.5)"),
        ),
        clause(secs <= 10.0, format!("{secs:.1}s")),
    ])
}

fn dual_path_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let base = KernelSpec::gaussian(1.0).unwrap();
    let probe = DMatrix::from_fn(50, 2, |_, _| rng.sample::<f64, _>(StandardNormal) * 1.5);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for &mu in &[0.01, 0.1, 1.0, 10.0] {
        for &lambda_a in &[1e-3, 1e-1] {
            for _ in 0..8 {
                let total = rng.random_range(2..=60);
                let n = rng.random_range(1..=total);
                let pts = DMatrix::from_fn(total, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let labels = (0..n)
                    .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                    .collect();
                let ds = Dataset::new(pts, labels).unwrap();
                let gl = GraphLaplacian::build(ds.points(), rng.random_range(0.2..2.0)).unwrap();
                let j = train_semi_joint(&ds, base, &gl, lambda_a, mu)
                    .unwrap()
                    .predict_batch(&probe)
                    .unwrap();
                let d = train_semi_deformed(&ds, base, &gl, lambda_a, mu)
                    .unwrap()
                    .predict_batch(&probe)
                    .unwrap();
                worst = worst.max((j - d).amax());
                instances += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    combine(vec![
        clause(instances >= 50, format!("{instances} instances")),
        clause(worst <= 1e-6, format!("max prediction gap {worst:.2e}")),
        clause(secs <= 30.0, format!("{secs:.1}s")),
    ])
}

fn rademacher_sandwich() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut outside = 0;
    let mut grams = 0;
    for t in 0..120u64 {
        let n = rng.random_range(1..=20);
        let rank = rng.random_range(1..=n + 2);
        let a = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = GramMatrix::from_matrix(&a * a.transpose()).unwrap();
        let b = rad_bounds_base(1.0, &g.diagonal()).unwrap();
        let e = rad_empirical_mc(1.0, &g, 10_000, t).unwrap();
        if e.estimate < b.lower - 3.0 * e.std_error || e.estimate > b.upper + 3.0 * e.std_error {
            outside += 1;
        }
        grams += 1;
    }
    let single = GramMatrix::from_matrix(DMatrix::from_element(1, 1, 2.5)).unwrap();
    let tight_gap = (rad_empirical_mc(1.0, &single, 10_000, 5).unwrap().estimate
        - rad_bounds_base(1.0, &single.diagonal()).unwrap().upper)
        .abs();
    let secs = start.elapsed().as_secs_f64();
    combine(vec![
        clause(
            outside == 0,
            format!("{outside}/{grams} grams outside the sandwich"),
        ),
        clause(
            tight_gap == 0.0,
            format!("n=1 gap to upper bound {tight_gap:.1e}"),
        ),
        clause(secs <= 30.0, format!("{secs:.1}s")),
    ])
}

fn laplacian_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_rel, mut worst_row, mut worst_eig): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=30);
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(0.0..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let f: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let gl = laplacian(w.clone()).unwrap();
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                pairs += w[(i, j)] * (f[i] - f[j]).powi(2);
            }
        }
        let q = gl.quadratic_form(&f).unwrap();
        if pairs > 0.0 {
            worst_rel = worst_rel.max((q - 0.5 * pairs).abs() / (0.5 * pairs));
        } else {
            worst_rel = worst_rel.max(q.abs());
        }
        let l = gl.matrix();
        let scale = l.amax().max(1e-300);
        for r in l.row_iter() {
            worst_row = worst_row.max(r.sum().abs() / scale);
        }
        let min_eig = SymmetricEigen::new(l.clone()).eigenvalues.min();
        worst_eig = worst_eig.max(-min_eig / l.trace().max(1e-300));
    }
    let secs = start.elapsed().as_secs_f64();
    combine(vec![
        clause(
            worst_rel <= 1e-10,
            format!("max relative identity error {worst_rel:.2e}"),
        ),
        clause(
            worst_row <= 1e-10,
            format!("max relative row sum {worst_row:.2e}"),
        ),
        clause(
            worst_eig <= 1e-10,
            format!("most negative eigenvalue / trace {:.2e}", -worst_eig),
        ),
        clause(secs <= 5.0, format!("{secs:.2}s")),
    ])
}

fn constrained_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base = KernelSpec::gaussian(0.5).unwrap();
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..20 {
        let total = rng.random_range(10..=40);
        let n = rng.random_range(2..=total.min(10));
        let pts = DMatrix::from_fn(total, 2, |_, _| rng.random_range(-1.0..1.0));
        let labels = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let ds = Dataset::new(pts, labels).unwrap();
        let gl = GraphLaplacian::build(ds.points(), 0.3).unwrap();
        let lambda_a = 1e-2;
        let mu_star = 10f64.powf(rng.random_range(-3.0..1.0));
        let model = train_semi_joint(&ds, base, &gl, lambda_a, mu_star).unwrap();
        let tau = empirical_penalty(&model, ds.points(), &gl).unwrap();
        match solve_constrained(&ds, base, &gl, lambda_a, tau) {
            Ok(sol) => worst = worst.max((sol.mu - mu_star).abs() / mu_star),
            Err(_) => errors += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    combine(vec![
        clause(errors == 0, format!("{errors} solver errors")),
        clause(worst <= 1e-6, format!("max relative mu error {worst:.2e}")),
        clause(secs <= 30.0, format!("{secs:.1}s")),
    ])
}

fn semi_supervised_benefit() -> Outcome {
    let start = Instant::now();
    let grid = log_grid(1e-3, 1.0, 25).unwrap();
    let (mut semi_acc, mut sup_acc) = (0.0, 0.0);
    let mut elbows = Vec::new();
    let seeds = 10;
    for seed in 0..seeds {
        let full = gen_circles(250, (1.0, 2.0), 0.05, seed).unwrap();
        let (train, holdout) = split_labels_holdout(&full, 2, seed).unwrap();
        let gl = circles_graph(&train);
        let ops = Arc::new(
            DeformOperators::new(base_kernel(), train.points().clone(), gl.matrix().clone())
                .unwrap(),
        );
        let curve = complexity_curve_with(1.0, &ops, &[0, 1], &grid).unwrap();
        let mu = grid[elbow_select(&curve).unwrap()];
        elbows.push(mu);
        let semi = train_semi_joint(&train, base_kernel(), &gl, LAMBDA_A, mu).unwrap();
        let sup = train_supervised(&train, base_kernel(), LAMBDA_A).unwrap();
        semi_acc += 1.0 - zero_one_error(&semi, &holdout).unwrap();
        sup_acc += 1.0 - zero_one_error(&sup, &holdout).unwrap();
    }
    semi_acc /= seeds as f64;
    sup_acc /= seeds as f64;
    let secs = start.elapsed().as_secs_f64();
    let (lo, hi) = elbows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    combine(vec![
        clause(
            semi_acc >= 0.95,
            format!("semi-supervised accuracy {semi_acc:.3} (elbow mu in [{lo:.3}, {hi:.3}])"),
        ),
        clause(sup_acc <= 0.75, format!("supervised accuracy {sup_acc:.3}")),
        clause(secs <= 60.0, format!("{secs:.1}s")),
    ])
}

fn q(epsilon: f64, delta: f64, b1: f64, b2: f64, pdim: u64, h: u64) -> BoundQuery {
    BoundQuery {
        epsilon,
        delta,
        b1,
        b2,
        pdim_psi: pdim,
        pdim_phi: pdim,
        h,
        tau: 0.0,
    }
}

fn bound_calculators() -> Outcome {
    // Values from 50-digit evaluation of the closed forms.
    let cases: Vec<(&str, u64, u64)> = vec![
        (
            "m thm2 eps=0.1 delta=0.05 B=1 pdim=10",
            unlabeled_size_thm2(&q(0.1, 0.05, 1.0, 1.0, 10, 10)).unwrap(),
            64437,
        ),
        (
            "m thm2 B1=2",
            unlabeled_size_thm2(&q(0.1, 0.05, 2.0, 1.0, 10, 10)).unwrap(),
            302109,
        ),
        (
            "m thm2 eps=0.05",
            unlabeled_size_thm2(&q(0.05, 0.05, 1.0, 1.0, 10, 10)).unwrap(),
            302109,
        ),
        (
            "m thm2 eps=0.3 delta=0.2 B=1.5 pdim=3",
            unlabeled_size_thm2(&q(0.3, 0.2, 1.5, 1.5, 3, 3)).unwrap(),
            4672,
        ),
        (
            "n thm2 eps=0.1 delta=0.05 B=1 pdim=h=10",
            labeled_size_thm2(&q(0.1, 0.05, 1.0, 1.0, 10, 10)).unwrap(),
            63883,
        ),
        (
            "n thm2 h=1e6",
            labeled_size_thm2(&q(0.1, 0.05, 1.0, 1.0, 10, 1_000_000)).unwrap(),
            250000,
        ),
        (
            "n thm2 eps=0.25 delta=0.01 B=0.7 pdim=4 h=7",
            labeled_size_thm2(&q(0.25, 0.01, 0.7, 0.7, 4, 7)).unwrap(),
            1695,
        ),
        (
            "m thm3 eps=0.1 delta=0.05 B=1 pdim=10",
            unlabeled_size_thm3(&q(0.1, 0.05, 1.0, 1.0, 10, 10)).unwrap(),
            13398,
        ),
        (
            "m thm3 eps=0.05 delta=0.1 B=0.5 pdim=5",
            unlabeled_size_thm3(&q(0.05, 0.1, 0.5, 0.5, 5, 5)).unwrap(),
            7268,
        ),
        (
            "n thm3 C=1 eps=0.1 delta=0.05 B2=2 pdim=10",
            labeled_size_thm3(&q(0.1, 0.05, 1.0, 2.0, 10, 10), 1.0).unwrap(),
            1208,
        ),
        (
            "n thm3 C=2.5 eps=0.2 delta=0.3 B2=3 pdim=6",
            labeled_size_thm3(&q(0.2, 0.3, 3.0, 3.0, 6, 6), 2.5).unwrap(),
            1671,
        ),
    ];
    let mismatches: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();

    // Monotonicity over a grid: non-increasing in epsilon and delta,
    // non-decreasing in B and in every capacity.
    type Eval = fn(&BoundQuery) -> Option<f64>;
    let evals: [(&str, Eval); 4] = [
        ("m thm2", |q| unlabeled_expr_thm2(q).ok().map(|e| e.value)),
        ("n thm2", |q| labeled_expr_thm2(q).ok().map(|e| e.value)),
        ("m thm3", |q| unlabeled_expr_thm3(q).ok().map(|e| e.value)),
        ("n thm3", |q| {
            labeled_expr_thm3(q, 1.0).ok().map(|e| e.value)
        }),
    ];
    let eps = [0.01, 0.05, 0.1, 0.2, 0.4];
    let deltas = [0.01, 0.05, 0.1, 0.3, 0.6];
    let bs = [0.5, 1.0, 2.0, 4.0];
    let caps = [1u64, 3, 10, 30];
    let mut violations = Vec::new();
    let mut checked = 0;
    for (name, f) in evals {
        for &e in &eps {
            for &d in &deltas {
                for &b in &bs {
                    for &c in &caps {
                        let base = q(e, d, b, b, c, c);
                        let Some(v) = f(&base) else { continue };
                        let neighbours = [
                            (
                                BoundQuery {
                                    epsilon: e * 1.5,
                                    ..base
                                },
                                -1.0,
                            ),
                            (
                                BoundQuery {
                                    delta: (d * 1.5).min(0.99),
                                    ..base
                                },
                                -1.0,
                            ),
                            (
                                BoundQuery {
                                    b1: b * 1.5,
                                    b2: b * 1.5,
                                    ..base
                                },
                                1.0,
                            ),
                            (
                                BoundQuery {
                                    pdim_psi: c + 1,
                                    pdim_phi: c + 1,
                                    h: c + 1,
                                    ..base
                                },
                                1.0,
                            ),
                        ];
                        for (nb, dir) in neighbours {
                            if nb.epsilon >= 1.0 {
                                continue;
                            }
                            let Some(w) = f(&nb) else { continue };
                            checked += 1;
                            if dir * (w - v) < -1e-9 * v.abs() {
                                violations.push(format!("{name} at {base:?}"));
                            }
                        }
                    }
                }
            }
        }
    }
    combine(vec![
        clause(
            mismatches.is_empty(),
            format!(
                "{}/{} reference values match{}",
                cases.len() - mismatches.len(),
                cases.len(),
                if mismatches.is_empty() {
                    String::new()
                } else {
                    format!(" (mismatches: {mismatches:?})")
                }
            ),
        ),
        clause(
            violations.is_empty() && checked > 0,
            format!(
                "{} monotonicity violations over {checked} comparisons",
                violations.len()
            ),
        ),
    ])
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("complexity curve shape on circles", curve_shape),
        ("deformed kernel separates the circles", slice_separation),
        ("joint and deformed solvers agree", dual_path_equivalence),
        (
            "monte-carlo rademacher within trace sandwich",
            rademacher_sandwich,
        ),
        ("laplacian quadratic-form identity", laplacian_identity),
        ("penalty-constrained round trip", constrained_round_trip),
        (
            "semi-supervised benefit with two labels",
            semi_supervised_benefit,
        ),
        ("sample-size calculators", bound_calculators),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "[{}] {}. {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
