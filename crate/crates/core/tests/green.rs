use fracspan::field::FnField;
use fracspan::green::{r0, GreenKernel};
use fracspan::quad::QuadConfig;
use fracspan::FracOrder;
use proptest::prelude::*;

fn kernel(n: u32, s: f64) -> GreenKernel {
    GreenKernel::new(n, FracOrder::new(s).unwrap())
}

// |x - z|^{2s-n} int_0^{r0} t^{s-1} (1+t)^{-n/2} dt, 30-digit adaptive quadrature.
const REFERENCE: [(u32, f64, [f64; 2], [f64; 2], f64); 5] = [
    (2, 0.3, [0.1, 0.2], [-0.4, 0.5], 6.5132744785136118456),
    (1, 0.7, [0.2, 0.0], [0.9, 0.0], 0.57949952889178546719),
    (1, 0.7, [0.2, 0.0], [-0.3, 0.0], 1.7954777294123816219),
    (2, 0.85, [0.6, -0.1], [0.55, 0.0], 5.8383712838259655558),
    (2, 0.5, [0.1, 0.1], [-0.9, 0.1], 0.79525598304425862207),
];

#[test]
fn reference_values() {
    for (n, s, x, z, g) in REFERENCE {
        let k = kernel(n, s);
        let (x, z) = (&x[..n as usize], &z[..n as usize]);
        let v = k.value(x, z).unwrap();
        assert!(((v - g) / g).abs() < 1e-10, "n={n} s={s}: {v} vs {g}");
    }
}

#[test]
fn half_line_closed_form() {
    let k = kernel(1, 0.5);
    for (x, z) in [(0.0f64, 0.5f64), (-0.9, 0.95), (0.3, 0.31), (-0.5, 0.2)] {
        let closed = 2.0 * ((1.0 - x * z + ((1.0 - x * x) * (1.0 - z * z)).sqrt()) / (z - x).abs()).ln();
        let v = k.value(&[x], &[z]).unwrap();
        assert!(((v - closed) / closed).abs() < 1e-12, "{x} {z}: {v} vs {closed}");
    }
}

#[test]
fn coincident_and_exterior_points_are_errors() {
    let k = kernel(2, 0.4);
    assert!(k.value(&[0.1, 0.1], &[0.1, 0.1]).is_err());
    assert!(k.value(&[0.1, 0.1], &[1.0, 0.0]).is_err());
    assert!(r0(&[0.5], &[0.5]).is_err());
}

#[test]
fn goa_limit_in_the_plane() {
    let k = kernel(2, 0.4);
    let datum = FnField::bump(vec![0.2, -0.1], 0.4);
    let e = [0.0, 1.0];
    let t = k.verify_goa_limit(&datum, &e, &[0.0, -1.0], &[1e-2, 1e-3, 1e-4], &QuadConfig::default()).unwrap();
    assert!(!t.undefined);
    let last = t.rows.last().unwrap().ratio;
    assert!((last - 1.0).abs() < 0.01, "ratio {last}");
}

#[test]
fn outward_direction_is_rejected() {
    let k = kernel(1, 0.5);
    let datum = FnField::bump(vec![0.0], 0.5);
    assert!(k.boundary_functional(&datum, &[1.0], &[1.0], &QuadConfig::default()).is_err());
}

#[test]
fn datum_away_from_the_boundary_point() {
    // The functional only sees the datum, so a far-away bump still gives a finite ratio near 1.
    let k = kernel(1, 0.3);
    let datum = FnField::bump(vec![-0.5], 0.3);
    let t = k.verify_goa_limit(&datum, &[1.0], &[-1.0], &[1e-3, 1e-4], &QuadConfig::default()).unwrap();
    assert!((t.rows[1].ratio - 1.0).abs() < 1e-3, "{:?}", t.rows);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric(n in 1u32..3, s in 0.05f64..0.95, a in -0.6f64..0.6, b in -0.6f64..0.6, c in -0.6f64..0.6, d in -0.6f64..0.6) {
        let k = kernel(n, s);
        let (x, z) = if n == 1 { (vec![a], vec![c]) } else { (vec![a, b], vec![c, d]) };
        prop_assume!(fracspan::field::dist(&x, &z) > 1e-3);
        let g1 = k.value(&x, &z).unwrap();
        let g2 = k.value(&z, &x).unwrap();
        prop_assert!(g1 > 0.0);
        prop_assert!((g1 - g2).abs() <= 1e-14 * g1);
    }

    #[test]
    fn branches_agree(n in 1u32..3, s in 0.05f64..0.95, a in -0.9f64..0.9, c in -0.9f64..0.9) {
        let k = kernel(n, s);
        let (x, z) = if n == 1 { (vec![a], vec![c]) } else { (vec![a, 0.0], vec![c * 0.6, c * 0.7]) };
        prop_assume!(fracspan::field::dist(&x, &z) > 1e-3);
        let v = k.value(&x, &z).unwrap();
        let q = k.value_quadrature(&x, &z).unwrap();
        prop_assert!((v - q).abs() <= 1e-11 * v, "{} vs {}", v, q);
    }

    #[test]
    fn series_split_sums_to_value(s in 0.05f64..0.95, a in -0.9f64..0.9, c in -0.9f64..0.9) {
        let k = kernel(1, s);
        prop_assume!((a - c).abs() > 1e-3);
        let split = k.series_split(&[a], &[c]).unwrap();
        let v = k.value(&[a], &[c]).unwrap();
        prop_assert!((split.total() - v).abs() <= 1e-11 * v);
    }
}
