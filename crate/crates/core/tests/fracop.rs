use fracspan::constants::torsion_constant;
use fracspan::field::{FnField, Kink, Sphere};
use fracspan::fracop::{frac_laplacian_at, lambda_residual_at, LocalTerm, NonlocalTerm, OperatorSpec};
use fracspan::quad::QuadConfig;
use fracspan::{gamma, FracOrder, ScalarField};
use proptest::prelude::*;

fn order(s: f64) -> FracOrder {
    FracOrder::new(s).unwrap()
}

fn lap(f: &dyn ScalarField, x: &[f64], s: f64) -> f64 {
    frac_laplacian_at(f, x, order(s), &QuadConfig::default()).unwrap().value
}

/// (1 - |x|^2)_+^{s+1} has (-Delta)^s equal to
/// 4^s Gamma(s+2) Gamma(n/2+s) / Gamma(n/2) (1 - (1 + 2s/n)|x|^2) in the ball.
fn power_profile(n: usize, s: f64, x: &[f64]) -> f64 {
    let h = n as f64 / 2.0;
    let c = 4f64.powf(s) * gamma(s + 2.0).unwrap() * gamma(h + s).unwrap() / gamma(h).unwrap();
    c * (1.0 - (1.0 + 2.0 * s / n as f64) * x.iter().map(|v| v * v).sum::<f64>())
}

#[test]
fn power_profiles_in_the_ball() {
    for (n, s, x) in
        [(1usize, 0.5, vec![0.3]), (1, 0.2, vec![-0.7]), (2, 0.6, vec![0.2, 0.4]), (2, 0.35, vec![0.0, -0.5])]
    {
        let f = FnField::ball_power(n, s + 1.0);
        let v = lap(&f, &x, s);
        let exact = power_profile(n, s, &x);
        assert!(((v - exact) / exact).abs() < 1e-7, "n={n} s={s}: {v} vs {exact}");
        let t = lap(&FnField::ball_power(n, s), &x, s);
        assert!((t / torsion_constant(n as u32, s) - 1.0).abs() < 1e-7, "torsion n={n} s={s}");
    }
}

#[test]
fn exterior_value_of_the_torsion_profile_is_negative() {
    let f = FnField::ball_power(1, 0.5);
    assert!(lap(&f, &[1.5], 0.5) < 0.0);
}

#[test]
fn caloric_operator_on_a_separable_field() {
    // u(t, x) = e^{-t} (1-x^2)^{3/2}: d_t u + (-Delta)^{1/2} u = e^{-t} ((-Delta)^{1/2} p - p).
    let spec = OperatorSpec::caloric(0.5, 1).unwrap();
    let p = |x: f64| (1.0 - x * x).max(0.0).powf(1.5);
    let u = FnField::new(2, Sphere::centered(2, 10.0), move |y| (-y[0]).exp() * p(y[1])).with_kinks(vec![Kink {
        axes: vec![1],
        center: vec![0.0],
        radius: 1.0,
    }]);
    for y in [[0.0, 0.2], [0.5, -0.4]] {
        let v = lambda_residual_at(&spec, &u, &y, &QuadConfig::default()).unwrap().value;
        let exact = (-y[0]).exp() * (power_profile(1, 0.5, &y[1..]) - p(y[1]));
        assert!((v - exact).abs() < 1e-6 * exact.abs().max(1.0), "{y:?}: {v} vs {exact}");
    }
}

#[test]
fn operator_validation() {
    assert!(OperatorSpec::new(vec![], vec![]).is_err());
    let block = |a: f64, n: u32| NonlocalTerm { a, s: order(0.5), n };
    assert!(OperatorSpec::new(vec![LocalTerm { a: 1.0, m: 1 }], vec![block(1.0, 0)]).is_err());
    assert!(OperatorSpec::new(vec![LocalTerm { a: 1.0, m: 0 }], vec![block(1.0, 1)]).is_err());
    assert!(OperatorSpec::new(vec![LocalTerm { a: 0.0, m: 1 }], vec![block(1.0, 1)]).is_err());
    assert!(OperatorSpec::new(vec![], vec![block(0.0, 1)]).is_err());
    let spec = OperatorSpec::caloric(0.4, 2).unwrap();
    assert_eq!((spec.d(), spec.dim()), (1, 3));
    assert_eq!(spec.block(0), 1..3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear(s in 0.1f64..0.9, a in -2.0f64..2.0, b in -2.0f64..2.0, x in -0.8f64..0.8) {
        let f = FnField::bump(vec![0.1], 0.6);
        let g = FnField::bump(vec![-0.2], 0.9);
        let combo = FnField::new(1, Sphere::centered(1, 1.2), move |y| {
            a * fracspan::field::bump_value((y[0] - 0.1).abs() / 0.6) + b * fracspan::field::bump_value((y[0] + 0.2).abs() / 0.9)
        });
        let lhs = lap(&combo, &[x], s);
        let rhs = a * lap(&f, &[x], s) + b * lap(&g, &[x], s);
        prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn scaling(s in 0.1f64..0.9, lambda in 0.5f64..2.0, x0 in -0.5f64..0.5, x1 in -0.5f64..0.5) {
        // f(lambda y) = bump(0, 1/lambda)(y)
        let f = FnField::bump(vec![0.0, 0.0], 1.0);
        let f_l = FnField::bump(vec![0.0, 0.0], 1.0 / lambda);
        let lhs = lap(&f_l, &[x0, x1], s);
        let rhs = lambda.powf(2.0 * s) * lap(&f, &[lambda * x0, lambda * x1], s);
        prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn translation(s in 0.1f64..0.9, c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, x0 in -0.6f64..0.6, x1 in -0.6f64..0.6) {
        let f = FnField::bump(vec![0.0, 0.0], 0.7);
        let g = FnField::bump(vec![c0, c1], 0.7);
        let lhs = lap(&g, &[x0 + c0, x1 + c1], s);
        let rhs = lap(&f, &[x0, x1], s);
        prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }
}
