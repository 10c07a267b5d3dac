//! Randomized checks of pointwise identities.

use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use herglotz_core::algebroid::{so3, so3_action_on_r3, tangent_bundle, AlgebroidChart};
use herglotz_core::connections::{dual_derivative, split_dl, TMConnection};
use herglotz_core::dynamics::State;
use herglotz_core::fd;
use herglotz_core::invariants::{dissipated_drift, energy, symmetry_residual, SymmetrySection};
use herglotz_core::lagrangian::{self, HerglotzLagrangian, MetricField, Potential};
use herglotz_core::scenarios::{default_scenario, hamel_lagrangian, wong_unreduced_lagrangian, HamelFrame, WongParams, SCENARIO_NAMES};

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn charts() -> Vec<AlgebroidChart> {
    let mut v: Vec<_> = SCENARIO_NAMES.iter().map(|n| default_scenario(n).unwrap().chart).collect();
    v.push(tangent_bundle(3).unwrap());
    v.push(so3());
    v.push(so3_action_on_r3());
    v
}

/// Position-dependent 2-D metric `diag(2 + sin x₀, 1 + x₁²)` with exact partials.
fn curved_metric() -> MetricField {
    MetricField::new(
        2,
        |x| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 + x[0].sin(), 1.0 + x[1] * x[1]])),
        |x| {
            vec![
                DMatrix::from_diagonal(&DVector::from_vec(vec![x[0].cos(), 0.0])),
                DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0 * x[1]])),
            ]
        },
    )
    .unwrap()
}

fn lagrangians_with_exact_partials() -> Vec<HerglotzLagrangian> {
    let quartic = Potential::new(
        |x| 0.25 * x.iter().map(|v| v.powi(4)).sum::<f64>(),
        |x| DVector::from_iterator(x.len(), x.iter().map(|v| v.powi(3))),
    );
    let rayleigh = lagrangian::rayleigh(curved_metric(), quartic, 0.3).unwrap();
    let magnetic = lagrangian::magnetic(1.5, curved_metric(), 0.7, Potential::quadratic(vec![1.0, 2.0]), 0.1).unwrap();
    let wong = lagrangian::wong_reduced(curved_metric(), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]), 0.2).unwrap();
    let hamel = hamel_lagrangian(&rayleigh, &HamelFrame::rotation(vec![0.7, -0.4]).unwrap()).unwrap();
    let p = WongParams {
        gauge: vec![0.3, -0.2],
        ..WongParams::default()
    };
    let conn = herglotz_core::algebroid::ConnectionForm::linear_gauge(
        DMatrix::from_row_slice(2, 1, &p.gauge),
        DMatrix::from_row_slice(2, 2, &p.field),
        0,
    );
    let unreduced = wong_unreduced_lagrangian(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), DMatrix::from_element(1, 1, 1.5), conn, 0.2).unwrap();
    let thermo = lagrangian::thermoviscous(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])), 0.0, 2.0, 0.4).unwrap();
    vec![rayleigh, magnetic, wong, hamel, unreduced, thermo]
}

/// Same values, no registered partials, so everything goes through differences.
fn values_only(l: &HerglotzLagrangian) -> HerglotzLagrangian {
    let inner = Arc::new(l.clone());
    HerglotzLagrangian::custom("fd", l.base_dim(), l.fiber_rank(), move |x, y, z| inner.eval(x, y, z).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure_is_exactly_skew_and_admissibility_is_exact(x in coords(3), y in coords(5)) {
        for chart in charts() {
            let (n, r) = (chart.base_dim(), chart.fiber_rank());
            let x = &x[..n.min(3)];
            if x.len() != n { continue; }
            let yy: Vec<f64> = (0..r).map(|k| y[k % 5]).collect();
            let c = chart.structure_eval(x).unwrap();
            prop_assert_eq!(c.antisymmetrized(), c.clone());
            let xdot = chart.anchor_eval(x).unwrap() * DVector::from_column_slice(&yy);
            let res = chart.admissibility_residual(x, xdot.as_slice(), &yy).unwrap();
            prop_assert!(res.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn exact_partials_match_differences(x in coords(3), y in coords(4), z in -1.0f64..1.0) {
        for l in lagrangians_with_exact_partials() {
            let (n, r) = (l.base_dim(), l.fiber_rank());
            let (x, y) = (&x[..n], &y[..r]);
            let exact_g = l.gradient(x, y, z).unwrap();
            let exact_h = l.hessian_blocks(x, y, z).unwrap();
            let f = values_only(&l);
            let g = f.gradient(x, y, z).unwrap();
            let h = f.hessian_blocks(x, y, z).unwrap();
            prop_assert!((exact_g.dx - g.dx).amax() < 1e-7, "{} dx", l.label());
            prop_assert!((exact_g.dy - g.dy).amax() < 1e-7, "{} dy", l.label());
            prop_assert!((exact_g.dz - g.dz).abs() < 1e-7, "{} dz", l.label());
            prop_assert!((&exact_h.yy - &h.yy).amax() < 1e-5, "{} yy", l.label());
            prop_assert!((&exact_h.yx - &h.yx).amax() < 1e-5, "{} yx", l.label());
            prop_assert!((&exact_h.yz - &h.yz).amax() < 1e-5, "{} yz", l.label());
        }
    }

    #[test]
    fn energy_is_affine_in_z_for_damped_builtins(x in coords(2), y in coords(3), z in -2.0f64..2.0) {
        let g = 0.35;
        let pairs = [
            (lagrangian::rayleigh(curved_metric(), Potential::quadratic(vec![1.0, 3.0]), g).unwrap(),
             lagrangian::rayleigh(curved_metric(), Potential::quadratic(vec![1.0, 3.0]), 0.0).unwrap()),
            (lagrangian::magnetic(2.0, curved_metric(), 0.5, Potential::zero(), g).unwrap(),
             lagrangian::magnetic(2.0, curved_metric(), 0.5, Potential::zero(), 0.0).unwrap()),
        ];
        for (l, l0) in pairs {
            let r = l.fiber_rank();
            let s = State::new(x.clone(), y[..r].to_vec(), z);
            let s0 = State::new(x.clone(), y[..r].to_vec(), 0.0);
            assert_relative_eq!(energy(&l, &s).unwrap(), energy(&l0, &s0).unwrap() + g * z, epsilon = 1e-12);
        }
    }

    #[test]
    fn christoffel_terms_cancel_pointwise(
        x in coords(3), y in coords(3), pdot in coords(3), seed in 0u64..1000
    ) {
        // the cancellation needs p = ∂L/∂y; ṗ is free
        let l = lagrangian::rigid_body_over(3, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])), 0.1).unwrap();
        let chart = so3_action_on_r3();
        let p = l.fiber_derivative(&x, &y, 0.2).unwrap();
        let pdot = DVector::from_vec(pdot);
        let s = State::new(x.clone(), y.clone(), 0.2);
        let rho = chart.anchor_eval(&x).unwrap();
        let covector = |conn: &TMConnection| {
            let sp = split_dl(conn, &chart, &l, &s).unwrap();
            dual_derivative(conn, &chart, &x, &y, &p, &pdot).unwrap() - rho.transpose() * sp.hor - &p * sp.dz
        };
        let a = covector(&TMConnection::trivial(3, 3));
        let b = covector(&TMConnection::random_constant(3, 3, seed));
        prop_assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn axisymmetric_axis_is_always_a_symmetry(xi in coords(3), z in -1.0f64..1.0, a in 0.5f64..3.0, c in 0.5f64..3.0) {
        let l = lagrangian::rigid_body(DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, c])), 0.05).unwrap();
        let sec = SymmetrySection::basis("e3", 3, 2);
        prop_assert!(symmetry_residual(&so3(), &l, &sec, &[], &xi, z).unwrap() < 1e-14);
    }

    #[test]
    fn exact_dissipation_has_no_drift(q0 in 0.1f64..5.0, rate in 0.0f64..2.0) {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let q: Vec<f64> = times.iter().map(|t| q0 * (-rate * t).exp()).collect();
        let lambda: Vec<f64> = times.iter().map(|t| (rate * t).exp()).collect();
        prop_assert!(dissipated_drift(&q, &lambda).unwrap() < 1e-13);
    }

    #[test]
    fn section_jacobian_by_differences(x in coords(2)) {
        let exact = SymmetrySection::new("s", |x| DVector::from_vec(vec![x[0] * x[1], x[0].sin()]))
            .with_jacobian(|x| DMatrix::from_row_slice(2, 2, &[x[1], x[0], x[0].cos(), 0.0]));
        let approx = SymmetrySection::new("s", |x| DVector::from_vec(vec![x[0] * x[1], x[0].sin()]));
        prop_assert!((exact.jacobian(&x) - approx.jacobian(&x)).amax() < 1e-9);
    }

    #[test]
    fn fd_gradient_is_second_order(x in coords(2)) {
        let f = |p: &[f64]| (p[0] * 1.3).sin() * p[1].exp();
        let exact = [1.3 * (x[0] * 1.3).cos() * x[1].exp(), (x[0] * 1.3).sin() * x[1].exp()];
        let e1 = (fd::gradient(f, &x, 1e-2) - DVector::from_column_slice(&exact)).amax();
        let e2 = (fd::gradient(f, &x, 5e-3) - DVector::from_column_slice(&exact)).amax();
        prop_assume!(e1 > 1e-10);
        prop_assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0);
    }
}
