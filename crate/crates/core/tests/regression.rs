mod common;

use bsindy::derivatives::{build_operators, DerivativeOperators, DerivativeSpec};
use bsindy::dynamics::{add_noise, builtin, default_initial_condition, simulate, TimeSeries};
use bsindy::evidence::optimal_alpha;
use bsindy::library::{build_library, FeatureLibrary};
use bsindy::regression::{
    build_problems, fit_bsindy, fit_exhaustive, fit_library, fit_sparsebayes, fit_stls, mce_matrix,
    rank_by_likelihood, support_of, true_coefficients, FitConfig, RegressionProblem, Strategy,
};
use nalgebra::{DMatrix, DVector};

struct Data {
    ts: TimeSeries,
    ops: DerivativeOperators,
    lib: FeatureLibrary,
    truth: DMatrix<f64>,
}

fn data(
    system: &str,
    t1: f64,
    n: usize,
    sigma: f64,
    spec: DerivativeSpec,
    degree: u32,
    seed: u64,
) -> Data {
    let sys = builtin(system, &[]).unwrap();
    let dt = t1 / n as f64;
    let clean = simulate(
        &sys,
        &default_initial_condition(system).unwrap(),
        0.0,
        dt,
        n,
        10,
    )
    .unwrap();
    let ts = add_noise(&clean, sigma, seed).unwrap();
    let ops = build_operators(&spec.stencil(dt).unwrap(), n).unwrap();
    let lib = build_library(&ts, &ops, degree).unwrap();
    let truth = true_coefficients(&sys, &lib.terms).unwrap();
    Data {
        ts,
        ops,
        lib,
        truth,
    }
}

const FD12: DerivativeSpec = DerivativeSpec::FiniteDifference { order: 12 };
const FD8: DerivativeSpec = DerivativeSpec::FiniteDifference { order: 8 };
const WEAK7: DerivativeSpec = DerivativeSpec::WeakForm {
    points: 7,
    power: 4,
};

fn cfg(alpha: f64, strategy: Strategy) -> FitConfig {
    FitConfig {
        alpha,
        strategy,
        ..FitConfig::default()
    }
}

#[test]
fn noiseless_lorenz_recovers_least_squares_solution() {
    let d = data("lorenz", 2.5, 201, 0.0, FD12, 3, 0);
    let model = fit_library(
        &d.ts.x,
        &d.ts.sigma_x2,
        &d.ops,
        &d.lib,
        &cfg(1.0 / 625.0, Strategy::Bsindy),
    )
    .unwrap();
    assert_eq!(model.supports(), support_of(&d.truth));
    let problems = build_problems(&d.ts.x, &d.ts.sigma_x2, &d.ops, &d.lib, 1e-12).unwrap();
    let mut ols = DMatrix::zeros(d.lib.len(), 3);
    for (k, p) in problems.iter().enumerate() {
        let support = &support_of(&d.truth)[k];
        let sub = p.design.select_columns(support);
        let w = sub.svd(true, true).solve(&p.y, 1e-14).unwrap();
        for (i, &c) in support.iter().enumerate() {
            ols[(c, k)] = w[i];
        }
    }
    let w = model.coefficient_matrix();
    assert!(mce_matrix(&w, &d.truth) < 0.01);
    assert!(mce_matrix(&w, &ols) < 1e-3);
}

fn lorenz_x3(sigma: f64, n: usize, seed: u64) -> Data {
    data("lorenz", 2.5, n, sigma, FD12, 2, seed)
}

#[test]
fn lorenz_third_equation_ranking() {
    let d = lorenz_x3(0.2, 200, 1);
    let problems = build_problems(&d.ts.x, &d.ts.sigma_x2, &d.ops, &d.lib, 1e-12).unwrap();
    let p = &problems[2];
    let c = cfg(1.0 / 625.0, Strategy::Bsindy);
    let mut ranked = fit_exhaustive(p, &c).unwrap();
    assert_eq!(ranked.len(), 1 << 10);
    let x3 = d.lib.index_of(&[0, 0, 1]).unwrap();
    let x1x2 = d.lib.index_of(&[1, 1, 0]).unwrap();
    assert_eq!(ranked[0].support, vec![x3, x1x2]);
    assert_eq!(fit_bsindy(p, &c).unwrap().active, ranked[0].support);
    let correct_occam = ranked[0].occam;
    let full = ranked
        .iter()
        .find(|m| m.support.len() == 10)
        .unwrap()
        .clone();
    assert!(correct_occam > full.occam);
    rank_by_likelihood(&mut ranked);
    assert_eq!(ranked[0].support.len(), 10);
}

#[test]
fn noise_iteration_converges_quickly_on_benchmarks() {
    let cases = [
        ("van_der_pol", 12.0, 200, 0.1, FD8, 1e-2),
        ("cubic_oscillator", 5.0, 100, 0.01, WEAK7, 1.0),
        ("lorenz", 2.5, 200, 0.1, FD12, 1.0 / 625.0),
    ];
    for (system, t1, n, sigma, spec, alpha) in cases {
        for seed in 0..5 {
            let d = data(system, t1, n, sigma, spec, 3, seed);
            let model = fit_library(
                &d.ts.x,
                &d.ts.sigma_x2,
                &d.ops,
                &d.lib,
                &cfg(alpha, Strategy::Bsindy),
            )
            .unwrap();
            assert!(
                model.max_noise_iterations() <= 5,
                "{system} seed {seed}: {} iterations",
                model.max_noise_iterations()
            );
        }
    }
}

fn problem<'a>(
    y: DVector<f64>,
    design: &'a DMatrix<f64>,
    var: &'a DMatrix<f64>,
    base: f64,
) -> RegressionProblem<'a> {
    let n = y.len();
    RegressionProblem::new(y, design, var, DVector::from_element(n, base), 1e-12).unwrap()
}

#[test]
fn stls_thresholds() {
    let mut rng = common::rng(2);
    let design = common::random_matrix(&mut rng, 30, 4);
    let var = DMatrix::zeros(30, 4);
    let y = &design * DVector::from_vec(vec![1.0, 0.5, 0.02, -0.3])
        + common::random_vector(&mut rng, 30) * 0.01;
    let all = fit_stls(
        &problem(y.clone(), &design, &var, 1e-4),
        &FitConfig {
            stls_lambda: 0.0,
            ..cfg(1.0, Strategy::Stls)
        },
    )
    .unwrap();
    assert_eq!(all.active, vec![0, 1, 2, 3]);

    let q = common::random_matrix(&mut rng, 20, 2).qr().q();
    let y = &q * DVector::from_vec(vec![1.0, 0.01]);
    let var = DMatrix::zeros(20, 2);
    let fit = fit_stls(
        &problem(y, &q, &var, 1e-4),
        &FitConfig {
            stls_lambda: 0.1,
            ..cfg(1.0, Strategy::Stls)
        },
    )
    .unwrap();
    assert_eq!(fit.active, vec![0]);
    assert!((fit.mean[0] - 1.0).abs() < 1e-12);
}

#[test]
fn sparsebayes_single_column_uses_optimal_prior() {
    let mut rng = common::rng(3);
    let design = common::random_matrix(&mut rng, 25, 1);
    let var = DMatrix::zeros(25, 1);
    let y = design.column(0).into_owned();
    let base = 0.01;
    let fit = fit_sparsebayes(
        &problem(y.clone(), &design, &var, base),
        &cfg(1.0, Strategy::Sparsebayes),
    )
    .unwrap();
    assert_eq!(fit.active, vec![0]);
    let s = design.column(0).norm_squared() / base;
    let q = design.column(0).dot(&y) / base;
    let alpha = optimal_alpha(s, q).unwrap();
    let expected = q / (alpha + s);
    assert!((fit.mean[0] - expected).abs() < 1e-9 * expected.abs());
}

#[test]
fn greedy_strategies_agree_on_noiseless_data() {
    // Noiseless fits need a variance floor at the level of the derivative
    // truncation error.
    for (system, t1, n, spec, alpha) in [
        ("lorenz", 2.5, 200, FD12, 1.0 / 625.0),
        ("cubic_oscillator", 5.0, 100, WEAK7, 1.0),
        ("van_der_pol", 12.0, 400, FD8, 1e-2),
    ] {
        let d = data(system, t1, n, 0.0, spec, 3, 0);
        let fit = |strategy| {
            let c = FitConfig {
                variance_floor_rel: 1e-4,
                ..cfg(alpha, strategy)
            };
            fit_library(&d.ts.x, &d.ts.sigma_x2, &d.ops, &d.lib, &c).unwrap()
        };
        let b = fit(Strategy::Bsindy);
        assert_eq!(b.supports(), support_of(&d.truth), "{system}");
        assert_eq!(
            fit(Strategy::Sparsebayes).supports(),
            b.supports(),
            "{system}"
        );
    }
}

#[test]
fn exhaustive_enumerates_every_support() {
    let mut rng = common::rng(4);
    let design = common::random_matrix(&mut rng, 12, 2);
    let var = DMatrix::zeros(12, 2);
    let y = design.column(0) * 2.0 + common::random_vector(&mut rng, 12) * 0.1;
    let ranked = fit_exhaustive(
        &problem(y, &design, &var, 0.01),
        &cfg(1.0, Strategy::Exhaustive),
    )
    .unwrap();
    let mut supports: Vec<Vec<usize>> = ranked.iter().map(|m| m.support.clone()).collect();
    supports.sort();
    assert_eq!(supports, vec![vec![], vec![0], vec![0, 1], vec![1]]);
    assert_eq!(ranked[0].support, vec![0]);
    assert!(ranked
        .windows(2)
        .all(|w| w[0].log_evidence >= w[1].log_evidence));
}

#[test]
fn exhaustive_refuses_large_libraries() {
    let d = data("lorenz", 2.5, 100, 0.1, FD12, 3, 0);
    let err = fit_library(
        &d.ts.x,
        &d.ts.sigma_x2,
        &d.ops,
        &d.lib,
        &cfg(1.0, Strategy::Exhaustive),
    );
    assert!(err.is_err());
}

#[test]
fn equations_render_with_two_significant_digits() {
    let d = data("lorenz", 2.5, 200, 0.0, FD12, 2, 0);
    let model = fit_library(
        &d.ts.x,
        &d.ts.sigma_x2,
        &d.ops,
        &d.lib,
        &cfg(1.0 / 625.0, Strategy::Bsindy),
    )
    .unwrap();
    assert_eq!(
        model.equations(),
        vec![
            "dx1/dt = −10·x1 + 10·x2",
            "dx2/dt = 28·x1 − 1.0·x2 − 1.0·x1·x3",
            "dx3/dt = −2.7·x3 + 1.0·x1·x2"
        ]
    );
}
