mod common;

use bsindy::bench::{fd_vs_weak_report, DerivCompareConfig};
use bsindy::derivatives::{
    build_operators, central_difference_ratios, central_difference_stencil,
    central_difference_weights, weak_form_stencil, DerivativeSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn column(values: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let v: Vec<f64> = values.collect();
    DMatrix::from_column_slice(v.len(), 1, &v)
}

#[test]
fn weights_match_vandermonde_solve() {
    for n in 1..=6 {
        let exact = central_difference_weights(n);
        let oracle = common::vandermonde_weights(n);
        for (a, b) in exact.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "n={n}: {exact:?} vs {oracle:?}");
        }
    }
    assert_eq!(central_difference_weights(1), vec![-0.5, 0.0, 0.5]);
    let r = central_difference_ratios(2);
    assert_eq!(
        r.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        ["1/12", "-2/3", "0", "2/3", "-1/12"]
    );
}

#[test]
fn eighth_order_differentiates_monomials_exactly() {
    let dt = 0.05;
    let ops = build_operators(&central_difference_stencil(4, dt).unwrap(), 41).unwrap();
    for k in 0..=8 {
        let x = column((0..41).map(|i| (i as f64 * dt - 1.0).powi(k)));
        let d = ops.differentiate(&x).unwrap();
        for (r, c) in ops.centers().enumerate() {
            let t = c as f64 * dt - 1.0;
            let truth = if k == 0 {
                0.0
            } else {
                k as f64 * t.powi(k - 1)
            };
            assert!(
                (d[r] - truth).abs() < 1e-9,
                "k={k} t={t}: {} vs {truth}",
                d[r]
            );
        }
    }
}

#[test]
fn sine_derivative_is_accurate() {
    let dt = 0.01;
    let n = 700;
    let ops = build_operators(&central_difference_stencil(4, dt).unwrap(), n).unwrap();
    let d = ops
        .differentiate(&column((0..n).map(|i| (i as f64 * dt).sin())))
        .unwrap();
    let worst = ops
        .centers()
        .enumerate()
        .map(|(r, c)| (d[r] - (c as f64 * dt).cos()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "max error {worst}");
}

#[test]
fn derivative_rows_sum_to_zero() {
    for spec in [
        DerivativeSpec::FiniteDifference { order: 12 },
        DerivativeSpec::WeakForm {
            points: 9,
            power: 2,
        },
        DerivativeSpec::WeakForm {
            points: 7,
            power: 4,
        },
    ] {
        let ops = build_operators(&spec.stencil(0.1).unwrap(), 60).unwrap();
        let dense = ops.derivative.to_dense();
        for r in 0..dense.nrows() {
            assert!(dense.row(r).sum().abs() < 1e-10);
        }
    }
}

#[test]
fn white_noise_variance_through_second_order_stencil() {
    let dt = 0.1;
    let sigma = 0.2;
    let n = 30;
    let ops = build_operators(&central_difference_stencil(2, dt).unwrap(), n).unwrap();
    let predicted = (2.0 / 144.0 + 2.0 * 4.0 / 9.0) / (dt * dt) * sigma * sigma;
    let analytic = ops
        .derivative_variance(&DMatrix::from_element(n, 1, sigma * sigma))
        .unwrap();
    assert!(analytic.iter().all(|v| (v / predicted - 1.0).abs() < 1e-12));
    let mut rng = common::rng(3);
    let mut acc = common::Moments::new(0.0);
    for _ in 0..10_000 {
        let eps = column((0..n).map(|_| sigma * common::normal(&mut rng)));
        let d = ops.differentiate(&eps).unwrap();
        acc.push(d[d.len() / 2]);
    }
    assert!((acc.variance() / predicted - 1.0).abs() < 0.02 + 3.0 * acc.variance_se() / predicted);
}

#[test]
fn operator_shapes() {
    let ops = build_operators(&central_difference_stencil(4, 0.1).unwrap(), 9).unwrap();
    assert_eq!(ops.rows(), 1);
    let ops = build_operators(&central_difference_stencil(4, 0.1).unwrap(), 100).unwrap();
    assert_eq!(ops.rows(), 92);
    let dense = ops.derivative.to_dense();
    for r in 0..92 {
        assert_eq!(dense.row(r).iter().filter(|v| **v != 0.0).count(), 8);
    }
    assert!(build_operators(&central_difference_stencil(4, 0.1).unwrap(), 8).is_err());
}

fn compare(dts: Vec<f64>, sigma_x: f64) -> Vec<bsindy::bench::DerivRow> {
    fd_vs_weak_report(&DerivCompareConfig {
        system: "van_der_pol".into(),
        parameters: Default::default(),
        x0: None,
        t0: 0.0,
        t1: 12.0,
        sigma_x,
        dts,
        schemes: vec![
            DerivativeSpec::FiniteDifference { order: 8 },
            DerivativeSpec::WeakForm {
                points: 9,
                power: 2,
            },
        ],
        realizations: 200,
        seed: 11,
        substeps: 10,
    })
    .unwrap()
}

#[test]
fn noiseless_fine_grid_is_accurate_for_both_schemes() {
    let rows = compare(vec![0.00025], 0.0);
    for r in rows {
        assert!(r.rms < 1e-4, "{} rms {}", r.scheme, r.rms);
    }
}

#[test]
fn weak_form_smooths_spikes_at_coarse_sampling() {
    let rows = compare(vec![0.1], 0.1);
    assert!(rows[1].bias > rows[0].bias, "{rows:?}");
}

#[test]
fn weak_form_beats_finite_difference_at_fine_sampling() {
    let rows = compare(vec![0.025], 0.1);
    assert!(rows[1].rms < rows[0].rms, "{rows:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_are_linear(a in -3.0f64..3.0, seed in any::<u64>(), half in 2usize..7, weak in any::<bool>()) {
        let st = if weak {
            weak_form_stencil(half, 0.1, 2).unwrap()
        } else {
            central_difference_stencil(half, 0.1).unwrap()
        };
        let n = 2 * half + 10;
        let ops = build_operators(&st, n).unwrap();
        let mut rng = common::rng(seed);
        let x = common::random_matrix(&mut rng, n, 2);
        let y = common::random_matrix(&mut rng, n, 2);
        let lhs = ops.differentiate(&(&x * a + &y)).unwrap();
        let rhs = ops.differentiate(&x).unwrap() * a + ops.differentiate(&y).unwrap();
        prop_assert!((lhs - rhs).abs().max() < 1e-9);
    }

    #[test]
    fn schemes_are_exact_on_lines(slope in -5.0f64..5.0, offset in -5.0f64..5.0, dt in 0.001f64..0.5,
                                  half in 2usize..7, power in 1u32..6) {
        for st in [central_difference_stencil(half, dt).unwrap(), weak_form_stencil(half, dt, power).unwrap()] {
            let n = 2 * half + 5;
            let ops = build_operators(&st, n).unwrap();
            let x = column((0..n).map(|i| offset + slope * i as f64 * dt));
            let d = ops.differentiate(&x).unwrap();
            prop_assert!(d.iter().all(|v| (v - slope).abs() < 1e-8 * (1.0 + slope.abs())));
            let c = ops.interpolate(&column((0..n).map(|_| offset))).unwrap();
            prop_assert!(c.iter().all(|v| (v - offset).abs() < 1e-12 * (1.0 + offset.abs())));
        }
    }
}
