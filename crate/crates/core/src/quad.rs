//! Quadrature rules: Gauss-Jacobi (Golub-Welsch), adaptive Gauss-Kronrod,
//! and tanh-sinh for integrands with endpoint singularities.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::ln_gamma;

/// Nodes and weights on [-1, 1] for the weight (1-t)^a (1+t)^b.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Same rule mapped affinely to [lo, hi] (weight factors are not rescaled).
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }
}

fn rule_cache() -> &'static Mutex<HashMap<(usize, u64, u64), Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64, u64), Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Jacobi rule with `n` nodes, a, b > -1. Cached.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Arc<Rule> {
    assert!(n >= 1 && a > -1.0 && b > -1.0, "invalid Gauss-Jacobi parameters");
    let key = (n, a.to_bits(), b.to_bits());
    if let Some(r) = rule_cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(golub_welsch(n, a, b));
    rule_cache().lock().unwrap().insert(key, rule.clone());
    rule
}

pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    gauss_jacobi(n, 0.0, 0.0)
}

fn golub_welsch(n: usize, a: f64, b: f64) -> Rule {
    let ab = a + b;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag =
            if k == 0 { (b - a) / (ab + 2.0) } else { (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0)) };
        m[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let num = 4.0 * j * (j + a) * (j + b) * (j + ab);
            let den = (2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0);
            let off = (num / den).sqrt();
            m[(k, k + 1)] = off;
            m[(k + 1, k)] = off;
        }
    }
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(ab + 2.0)).exp();
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Outcome of an adaptive integration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    /// Set when the tolerance was not met within the configured budget.
    pub exceeded: bool,
    pub evals: usize,
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;
    fn add(self, o: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + o.value,
            error: self.error + o.error,
            exceeded: self.exceeded || o.exceeded,
            evals: self.evals + o.evals,
        }
    }
}

impl QuadResult {
    pub fn scale(self, c: f64) -> QuadResult {
        QuadResult { value: c * self.value, error: c.abs() * self.error, ..self }
    }
}

/// Tolerances shared by the adaptive integrators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Finest tanh-sinh level; step 2^-max_level.
    pub max_level: u32,
    /// Gauss-Jacobi nodes for the near-singular radial part.
    pub inner_nodes: usize,
    /// Trapezoid nodes on a half circle for the near-singular angular part.
    pub angular_nodes: usize,
    /// Upper bound of the singular split radius.
    pub delta_max: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { rel_tol: 1e-10, abs_tol: 1e-13, max_level: 8, inner_nodes: 12, angular_nodes: 24, delta_max: 1e-2 }
    }
}

const TANH_SINH_TMAX: f64 = 4.5;

/// Adaptive tanh-sinh on [a, b]; endpoint singularities are allowed.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> QuadResult {
    if !(b > a) {
        return QuadResult::default();
    }
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let mut evals = 0usize;
    let mut eval_pair = |t: f64, evals: &mut usize| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let ch = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (ch * ch);
        if !(w > 0.0) || !w.is_finite() {
            return 0.0;
        }
        // distance from the nearer endpoint, computed without cancellation
        let d = 2.0 * hw / (1.0 + (2.0 * u.abs()).exp());
        let (xl, xr) = (a + d, b - d);
        let mut s = 0.0;
        for x in if t == 0.0 { [c, f64::NAN] } else { [xl, xr] } {
            if x.is_nan() || x <= a || x >= b {
                continue;
            }
            let y = f(x);
            *evals += 1;
            if y.is_finite() {
                s += y;
            }
        }
        hw * w * s
    };
    let mut h = 1.0;
    let mut sum = eval_pair(0.0, &mut evals);
    let mut k = 1;
    while k as f64 * h <= TANH_SINH_TMAX {
        sum += eval_pair(k as f64 * h, &mut evals);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for level in 1..=cfg.max_level {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= TANH_SINH_TMAX {
            sum += eval_pair(k as f64 * h, &mut evals);
            k += 2;
        }
        let next = sum * h;
        error = (next - estimate).abs();
        estimate = next;
        if level >= 3 && error <= cfg.abs_tol.max(cfg.rel_tol * estimate.abs()) {
            return QuadResult { value: estimate, error, exceeded: false, evals };
        }
    }
    QuadResult { value: estimate, error, exceeded: error > cfg.abs_tol.max(cfg.rel_tol * estimate.abs()), evals }
}

/// tanh-sinh over consecutive segments of a sorted breakpoint list.
pub fn tanh_sinh_pieces<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], cfg: &QuadConfig) -> QuadResult {
    let mut total = QuadResult::default();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total = total + tanh_sinh(&mut f, w[0], w[1], cfg);
        }
    }
    total
}

/// Sorted, deduplicated breakpoints restricted to [lo, hi], endpoints included.
pub fn breakpoints(lo: f64, hi: f64, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let span = hi - lo;
    let mut v: Vec<f64> =
        std::iter::once(lo).chain(extra.into_iter().filter(|&x| x > lo && x < hi)).chain(std::iter::once(hi)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * span.abs().max(1.0));
    v
}

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Globally adaptive Gauss-Kronrod 7/15 bisection, for smooth integrands.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> QuadResult {
    if a == b {
        return QuadResult::default();
    }
    let mut segs = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    let mut evals = 15;
    let max_segments = 1usize << cfg.max_level.min(12);
    loop {
        let value: f64 = segs.iter().map(|s| s.2).sum();
        let error: f64 = segs.iter().map(|s| s.3).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol || segs.len() >= max_segments {
            return QuadResult { value, error, exceeded: error > tol, evals };
        }
        let worst = segs.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).map(|(i, _)| i).unwrap();
        let (lo, hi, _, _) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let r = gauss_legendre(6);
        for p in 0..12 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((r.integrate(|x| x.powi(p)) - exact).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn jacobi_weight_mass() {
        // integral of (1-t)^a (1+t)^b = 2^{a+b+1} B(a+1, b+1)
        let (a, b) = (-0.3, 0.7);
        let r = gauss_jacobi(10, a, b);
        let exact =
            (2f64.powf(a + b + 1.0) * (ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp()).abs();
        assert!((r.weights.iter().sum::<f64>() - exact).abs() < 1e-13);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn kronrod_exact_to_degree_22() {
        let cfg = QuadConfig::default();
        let r = gauss_kronrod(|x| x.powi(22), -1.0, 1.0, &cfg);
        assert!((r.value - 2.0 / 23.0).abs() < 1e-15);
        let mut f = |x: f64| x.powi(22);
        let (v, _) = gk15(&mut f, 0.0, 1.0);
        assert!((v - 1.0 / 23.0).abs() < 1e-15);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        let cfg = QuadConfig::default();
        // integral of x^{-1/2} on [0,1] = 2
        let r = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, &cfg);
        assert!((r.value - 2.0).abs() < 1e-10, "{r:?}");
        assert!(!r.exceeded);
        // log singularity
        let r = tanh_sinh(|x| -x.ln(), 0.0, 1.0, &cfg);
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn breakpoints_sorted_and_clipped() {
        let b = breakpoints(-1.0, 1.0, [0.5, -3.0, 0.5, -0.2]);
        assert_eq!(b, vec![-1.0, -0.2, 0.5, 1.0]);
    }
}
