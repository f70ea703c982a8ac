// Reference values are frozen digits, some of which coincide with named constants.
#![allow(clippy::approx_constant)]

use fracspan::constants::{ln_gamma, torsion_constant, Constants};
use fracspan::{gamma, green_constant, normalization_constant, FracOrder};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn order(s: f64) -> FracOrder {
    FracOrder::new(s).unwrap()
}

// Reference values from a 30-digit evaluation.
const GAMMA: [(f64, f64); 9] = [
    (0.37, 2.4035500200786532485),
    (1.5, 0.88622692545275801365),
    (2.7, 1.544685845850593765),
    (7.3, 1271.4236336639092731),
    (0.05, 19.470085311255512864),
    (12.5, 136843365.46556585726),
    (0.999, 1.000578205629358648),
    (33.3, 7.487577596522706608e35),
    (49.5, 8.6676018431352723453e61),
];

// (n, s, C(n,s), kappa(n,s), torsion constant)
const CONSTANTS: [(u32, f64, f64, f64, f64); 4] = [
    (1, 0.5, 0.31830988618379067154, 0.15915494309189533577, 1.0),
    (2, 0.3, 0.10007289206487783637, 0.023465730850259027596, 1.2208394419654280375),
    (1, 0.7, 0.31988109866734784016, 0.22489075099093331462, 1.2421693445043054049),
    (2, 0.85, 0.13363591921306715648, 0.079161094987499759505, 2.9052010056720977829),
];

#[test]
fn gamma_reference_values() {
    for (x, g) in GAMMA {
        assert!(rel(gamma(x).unwrap(), g) < 1e-12, "gamma({x})");
        assert!((ln_gamma(x) - g.ln()).abs() < 1e-12 * g.ln().abs().max(1.0), "ln_gamma({x})");
    }
}

#[test]
fn gamma_domain() {
    for x in [0.0, -1.0, -0.5, f64::NAN, f64::INFINITY] {
        assert!(gamma(x).is_err(), "{x}");
    }
}

#[test]
fn constant_reference_values() {
    for (n, s, c, k, t) in CONSTANTS {
        assert!(rel(normalization_constant(n, order(s)).unwrap(), c) < 1e-13, "C({n},{s})");
        assert!(rel(green_constant(n, order(s)).unwrap(), k) < 1e-13, "kappa({n},{s})");
        assert!(rel(torsion_constant(n, s), t) < 1e-13, "torsion({n},{s})");
    }
}

#[test]
fn zero_dimension_is_rejected() {
    assert!(Constants::get(0, order(0.5)).is_err());
}

#[test]
fn frac_order_deserializes_with_validation() {
    let ok: FracOrder = serde_json::from_str("0.25").unwrap();
    assert_eq!(ok.get(), 0.25);
    assert!(serde_json::from_str::<FracOrder>("1.0").is_err());
}

proptest! {
    #[test]
    fn gamma_recurrence(x in 0.05f64..49.0) {
        prop_assert!(rel(gamma(x + 1.0).unwrap(), x * gamma(x).unwrap()) < 2e-12);
    }

    #[test]
    fn gamma_reflection(x in 0.01f64..0.99) {
        let lhs = gamma(x).unwrap() * gamma(1.0 - x).unwrap();
        prop_assert!(rel(lhs, std::f64::consts::PI / (std::f64::consts::PI * x).sin()) < 1e-13);
    }

    #[test]
    fn ln_gamma_is_log_of_gamma(x in 0.01f64..50.0) {
        prop_assert!((ln_gamma(x) - gamma(x).unwrap().ln()).abs() < 1e-12 * ln_gamma(x).abs().max(1.0));
    }

    #[test]
    fn constants_positive_and_finite(n in 1u32..4, s in 0.01f64..0.99) {
        let c = Constants::get(n, order(s)).unwrap();
        prop_assert!(c.c_norm > 0.0 && c.c_norm.is_finite());
        prop_assert!(c.kappa_green > 0.0 && c.kappa_green.is_finite());
        prop_assert!(torsion_constant(n, s) > 0.0);
    }
}
