use std::sync::Arc;

use fracspan::approximator::{
    approximate_caloric, approximate_polynomial, build_dictionary, eigenpairs_for, error_grid, exponents,
    fit_polynomial, plan, ApproxField, ApproxOptions, ApproximationResult, ErrorDomain, MonomialTerm,
};
use fracspan::field::{FnField, Sphere};
use fracspan::fracop::{lambda_residual_at, OperatorSpec};
use fracspan::quad::QuadConfig;
use fracspan::spanner::{build_element, ElementParams};
use fracspan::ScalarField;
use proptest::prelude::*;

fn single_element_field(
    spec: &OperatorSpec,
    params: ElementParams,
    iota: &[u32],
    eta: f64,
) -> (ApproxField, Arc<Vec<fracspan::spanner::DictionaryElement>>) {
    let pairs = eigenpairs_for(spec, &Default::default()).unwrap();
    let el = build_element(spec, &params, &pairs).unwrap();
    let elements = Arc::new(vec![el]);
    let p = plan(spec, iota, 0).unwrap();
    let term = MonomialTerm {
        weight: 1.0,
        plan: fracspan::approximator::ApproximationPlan { eta, ..p },
        coefficients: vec![1.0],
    };
    (ApproxField::new(spec.clone(), elements.clone(), vec![term]), elements)
}

#[test]
fn rescaling_identity_for_the_operator() {
    // eta^gamma Lambda u(y) = eta Lambda w(S_eta y) for u = eta^{-gamma} w(S_eta y).
    let spec = OperatorSpec::fractional(0.3, 1).unwrap();
    let params = ElementParams::Harmonic { radii: vec![2.0], e: vec![vec![1.0]], y: vec![vec![-0.3]], eps: 1.0 };
    let eta = 0.5;
    let (u, elements) = single_element_field(&spec, params, &[2], eta);
    let gamma = u.terms[0].plan.gamma;
    let sc = eta.powf(exponents(&spec)[0]);
    let cfg = QuadConfig::default();
    for z in [-2.2, 0.6, 0.9, 2.0] {
        let y = [z / sc];
        let lhs = eta.powf(gamma) * lambda_residual_at(&spec, &u, &y, &cfg).unwrap().value;
        let rhs = eta * lambda_residual_at(&spec, &elements[0], &[z], &cfg).unwrap().value;
        assert!(rhs.abs() > 1e-3);
        assert!((lhs - rhs).abs() < 1e-7 * rhs.abs(), "z={z}: {lhs} vs {rhs}");
    }
}

#[test]
fn rescaling_identity_for_the_caloric_operator() {
    let spec = OperatorSpec::caloric(0.5, 1).unwrap();
    let pairs = eigenpairs_for(&spec, &Default::default()).unwrap();
    let r = pairs[0].lambda_star;
    let params = ElementParams::Eigen { t: vec![1.0], e: vec![vec![r]], y: vec![vec![-0.3 * r]], eps: 1.0 };
    let eta = 0.25;
    let (u, elements) = single_element_field(&spec, params, &[1, 1], eta);
    let gamma = u.terms[0].plan.gamma;
    let cfg = QuadConfig::default();
    for z in [[0.7, 0.1], [-0.8, -0.4]] {
        let y = [z[0] / eta, z[1] / eta];
        let lhs = eta.powf(gamma) * lambda_residual_at(&spec, &u, &y, &cfg).unwrap().value;
        let rhs = eta * lambda_residual_at(&spec, &elements[0], &z, &cfg).unwrap().value;
        assert!(rhs.abs() > 1e-3);
        assert!((lhs - rhs).abs() < 1e-7 * rhs.abs(), "z={z:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn harmonic_square_has_positive_second_difference() {
    let spec = OperatorSpec::fractional(0.5, 1).unwrap();
    let options = ApproxOptions::default();
    let res = approximate_polynomial(&spec, &[(1.0, vec![2])], 0, 0.01, &[], &options).unwrap();
    assert!(res.achieved_ck_error <= 0.01);
    let u = res.evaluator().unwrap();
    let h = 0.1;
    let d2 = u.eval(&[h]) - 2.0 * u.eval(&[0.0]) + u.eval(&[-h]);
    assert!(d2 > 0.0);
    assert!(res.lambda_residual < 1e-3);
}

#[test]
fn first_order_error_is_measured_on_derivatives() {
    let spec = OperatorSpec::fractional(0.5, 1).unwrap();
    let res = approximate_polynomial(&spec, &[(1.0, vec![1])], 1, 0.05, &[], &ApproxOptions::default()).unwrap();
    assert!(res.achieved_ck_error <= 0.05);
    let u = res.evaluator().unwrap();
    let d = u.derivatives(&[0.2], 1).unwrap();
    assert!((d[1] - 1.0).abs() <= 0.05);
}

#[test]
fn zero_target_gives_the_zero_field() {
    let spec = OperatorSpec::caloric(0.5, 1).unwrap();
    let pairs = eigenpairs_for(&spec, &Default::default()).unwrap();
    let res = approximate_polynomial(&spec, &[(0.0, vec![2, 0])], 0, 0.1, &pairs, &ApproxOptions::default()).unwrap();
    assert!(res.terms.is_empty());
    assert_eq!(res.evaluator().unwrap().eval(&[0.3, 0.1]), 0.0);
}

#[test]
fn result_survives_serialization() {
    let spec = OperatorSpec::caloric(0.5, 1).unwrap();
    let pairs = eigenpairs_for(&spec, &Default::default()).unwrap();
    let options = ApproxOptions { domain: ErrorDomain::Box, ..Default::default() };
    let res = approximate_polynomial(&spec, &[(1.0, vec![0, 2])], 0, 0.05, &pairs, &options).unwrap();
    let back: ApproximationResult = serde_json::from_str(&serde_json::to_string(&res).unwrap()).unwrap();
    let (a, b) = (res.evaluator().unwrap(), back.evaluator().unwrap());
    for y in [[0.0, 0.0], [0.5, -0.7], [-1.0, 1.0]] {
        assert_eq!(a.eval(&y), b.eval(&y));
    }
}

#[test]
fn polynomial_fit_is_exact_for_polynomials() {
    let f = FnField::new(2, Sphere::centered(2, 10.0), |y| 1.0 - 2.0 * y[0] * y[1] + 0.5 * y[1].powi(3));
    let grid = error_grid(2, 9, ErrorDomain::Box);
    let (weights, err) = fit_polynomial(&f, 0, 1e-6, &grid, 4).unwrap();
    assert!(err < 1e-10);
    // weights are on y^iota / iota!
    let get = |i: &[u32]| weights.iter().find(|(_, k)| k == i).map(|(w, _)| *w).unwrap_or(0.0);
    assert!((get(&[0, 0]) - 1.0).abs() < 1e-9);
    assert!((get(&[1, 1]) + 2.0).abs() < 1e-9);
    assert!((get(&[0, 3]) - 3.0).abs() < 1e-9);
}

#[test]
fn caloric_approximation_of_a_smooth_function() {
    let f = FnField::new(2, Sphere::centered(2, 10.0), |y| (0.5 * y[1]).cos() + 0.2 * y[0]);
    let res = approximate_caloric(&f, 0.5, 0, 0.05, &ApproxOptions::default()).unwrap();
    assert!(res.achieved_ck_error <= 0.05);
    assert!(res.fit_error <= 0.025);
}

#[test]
fn error_grid_shapes() {
    assert_eq!(error_grid(2, 17, ErrorDomain::Box).len(), 17 * 17);
    let ball = error_grid(2, 17, ErrorDomain::Ball);
    assert!(ball.iter().all(|p| p[0] * p[0] + p[1] * p[1] <= 1.0 + 1e-12));
    assert!(ball.len() < 17 * 17);
}

proptest! {
    #[test]
    fn monomial_self_similarity(i in 0u32..4, j in 0u32..4, eta in 0.01f64..1.0, t in -1.0f64..1.0, x in -1.0f64..1.0, s in 0.1f64..0.9) {
        let spec = OperatorSpec::caloric(s, 1).unwrap();
        let p = plan(&spec, &[i, j], 0).unwrap();
        let e = exponents(&spec);
        let f = |a: f64, b: f64| a.powi(i as i32) * b.powi(j as i32);
        let lhs = eta.powf(-p.gamma) * f(eta.powf(e[0]) * t, eta.powf(e[1]) * x);
        prop_assert!((lhs - f(t, x)).abs() <= 1e-12 * f(t, x).abs().max(1.0));
    }

    #[test]
    fn compact_support(r in 1.0f64..3.0, a in 0.0f64..std::f64::consts::TAU) {
        let spec = OperatorSpec::fractional(0.5, 2).unwrap();
        let dict = build_dictionary(&spec, &Default::default(), &[]).unwrap();
        let p = plan(&spec, &[1, 0], 0).unwrap();
        let n = dict.elements.len();
        let coefficients: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let u = ApproxField::new(spec, dict.elements.clone(), vec![MonomialTerm { weight: 1.0, plan: fracspan::approximator::ApproximationPlan { eta: 0.3, ..p }, coefficients }]);
        let rad = u.support().radius * r;
        prop_assert_eq!(u.eval(&[rad * a.cos(), rad * a.sin()]), 0.0);
    }
}
