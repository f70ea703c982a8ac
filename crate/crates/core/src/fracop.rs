//! Pointwise fractional Laplacian and the mixed operator
//! Lambda = sum a_j d^{m_j}_{x_j} + sum A_j (-Delta_{X_j})^{s_j}.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{Constants, FracOrder};
use crate::field::{dist, Kink, ScalarField, Slice};
use crate::quad::{breakpoints, gauss_jacobi, tanh_sinh, tanh_sinh_pieces, QuadConfig, QuadResult};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTerm {
    pub a: f64,
    pub m: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalTerm {
    #[serde(rename = "A")]
    pub a: f64,
    pub s: FracOrder,
    pub n: u32,
}

/// Variables are ordered (x_1..x_d, X_1..X_N), each X_j a block of n_j coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub local: Vec<LocalTerm>,
    pub nonlocal: Vec<NonlocalTerm>,
}

impl OperatorSpec {
    pub fn new(local: Vec<LocalTerm>, nonlocal: Vec<NonlocalTerm>) -> Result<Self, Error> {
        let spec = OperatorSpec { local, nonlocal };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.nonlocal.is_empty() {
            return Err(Error::Domain("at least one nonlocal term is required".into()));
        }
        if !self.local.is_empty() && self.local.iter().all(|t| t.a == 0.0) {
            return Err(Error::Domain("local coefficients vanish identically".into()));
        }
        if self.nonlocal.iter().all(|t| t.a == 0.0) {
            return Err(Error::Domain("nonlocal coefficients vanish identically".into()));
        }
        if self.local.iter().any(|t| t.m == 0) || self.nonlocal.iter().any(|t| t.n == 0) {
            return Err(Error::Domain("orders and block dimensions must be positive".into()));
        }
        Ok(())
    }

    /// (-Delta)^s in one block of dimension n.
    pub fn fractional(s: f64, n: u32) -> Result<Self, Error> {
        OperatorSpec::new(vec![], vec![NonlocalTerm { a: 1.0, s: FracOrder::new(s)?, n }])
    }

    /// d_t + (-Delta)^s, variables ordered (t, x).
    pub fn caloric(s: f64, n: u32) -> Result<Self, Error> {
        OperatorSpec::new(vec![LocalTerm { a: 1.0, m: 1 }], vec![NonlocalTerm { a: 1.0, s: FracOrder::new(s)?, n }])
    }

    pub fn d(&self) -> usize {
        self.local.len()
    }

    /// Total number of variables.
    pub fn dim(&self) -> usize {
        self.local.len() + self.nonlocal.iter().map(|t| t.n as usize).sum::<usize>()
    }

    /// Coordinate range of nonlocal block j.
    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        let start = self.local.len() + self.nonlocal[..j].iter().map(|t| t.n as usize).sum::<usize>();
        start..start + self.nonlocal[j].n as usize
    }
}

/// A quadrature-based value with its error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FracValue {
    pub value: f64,
    pub error: f64,
    pub budget_exceeded: bool,
}

impl FracValue {
    fn from_quad(q: QuadResult, scale: f64) -> Self {
        FracValue { value: scale * q.value, error: scale.abs() * q.error, budget_exceeded: q.exceeded }
    }
}

impl std::ops::Add for FracValue {
    type Output = FracValue;
    fn add(self, o: FracValue) -> FracValue {
        FracValue {
            value: self.value + o.value,
            error: self.error + o.error,
            budget_exceeded: self.budget_exceeded || o.budget_exceeded,
        }
    }
}

fn split_radius(field: &(impl ScalarField + ?Sized), x: &[f64], cfg: &QuadConfig) -> Result<f64, Error> {
    let r = field.smooth_radius_at(x);
    if !(r > 1e-13) {
        return Err(Error::OutsideSmoothRegion(x.to_vec()));
    }
    Ok(0.5 * cfg.delta_max.min(r))
}

/// (-Delta)^s field(x) for fields on R^1 or R^2.
pub fn frac_laplacian_at(
    field: &(impl ScalarField + ?Sized),
    x: &[f64],
    s: FracOrder,
    cfg: &QuadConfig,
) -> Result<FracValue, Error> {
    let n = field.dim();
    if x.len() != n {
        return Err(Error::Domain(format!("point of dimension {} for a field on R^{n}", x.len())));
    }
    let c = Constants::get(n as u32, s)?.c_norm;
    let delta = split_radius(field, x, cfg)?;
    let q = match n {
        1 => integral_1d(field, x[0], s.get(), delta, cfg),
        2 => integral_2d(field, [x[0], x[1]], s.get(), delta, cfg),
        _ => return Err(Error::Unsupported(format!("fractional blocks of dimension {n}"))),
    };
    Ok(FracValue::from_quad(q, c))
}

// Gauss-Jacobi nodes for int_0^delta g(y) y^{1-2s} dy; returns (y_i, w_i).
fn inner_rule(s: f64, delta: f64, nodes: usize) -> Vec<(f64, f64)> {
    let rule = gauss_jacobi(nodes, 0.0, 1.0 - 2.0 * s);
    let scale = (0.5 * delta).powf(2.0 - 2.0 * s);
    rule.nodes.iter().zip(&rule.weights).map(|(&t, &w)| (0.5 * delta * (1.0 + t), scale * w)).collect()
}

fn inner_estimate(s: f64, delta: f64, cfg: &QuadConfig, mut g: impl FnMut(f64) -> f64) -> (f64, f64) {
    let fine: f64 = inner_rule(s, delta, cfg.inner_nodes).iter().map(|&(y, w)| w * g(y)).sum();
    let coarse: f64 = inner_rule(s, delta, (cfg.inner_nodes / 2).max(2)).iter().map(|&(y, w)| w * g(y)).sum();
    (fine, (fine - coarse).abs())
}

fn integral_1d(field: &(impl ScalarField + ?Sized), x: f64, s: f64, delta: f64, cfg: &QuadConfig) -> QuadResult {
    let u0 = field.eval(&[x]);
    let (inner, inner_err) =
        inner_estimate(s, delta, cfg, |y| (2.0 * u0 - field.eval(&[x + y]) - field.eval(&[x - y])) / (y * y));
    let tail = 2.0 * u0 * delta.powf(-2.0 * s) / (2.0 * s);
    let supp = field.support();
    let reach = (x - supp.center[0]).abs() + supp.radius;
    let mut cuts = Vec::new();
    for k in field.kinks() {
        for p in [k.center[0] - k.radius, k.center[0] + k.radius] {
            let y = (p - x).abs();
            if y > delta && y < reach {
                cuts.push(y.ln());
            }
        }
    }
    let outer = if reach > delta {
        let br = breakpoints(delta.ln(), reach.ln(), cuts);
        tanh_sinh_pieces(
            |v| {
                let y = v.exp();
                (field.eval(&[x + y]) + field.eval(&[x - y])) * (-2.0 * s * v).exp()
            },
            &br,
            cfg,
        )
    } else {
        QuadResult::default()
    };
    QuadResult {
        value: inner + tail - outer.value,
        error: inner_err + outer.error,
        exceeded: outer.exceeded,
        evals: outer.evals + 3 * cfg.inner_nodes / 2 * 2,
    }
}

/// Angles at which the circle of radius rho around x crosses the kink circles.
fn crossing_angles(x: [f64; 2], rho: f64, kinks: &[Kink]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in kinks {
        if k.center.len() != 2 {
            continue;
        }
        let d = [x[0] - k.center[0], x[1] - k.center[1]];
        let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if dn == 0.0 {
            continue;
        }
        // |d + rho theta|^2 = R^2
        let cos = (k.radius * k.radius - dn * dn - rho * rho) / (2.0 * rho * dn);
        if cos.abs() < 1.0 {
            let base = d[1].atan2(d[0]);
            let a = cos.acos();
            for t in [base + a, base - a] {
                out.push(t.rem_euclid(2.0 * PI));
            }
        }
    }
    out
}

/// Integral over a full circle of radius rho around x, split at kink crossings.
fn circle_integral(
    field: &(impl ScalarField + ?Sized),
    x: [f64; 2],
    rho: f64,
    kinks: &[Kink],
    cfg: &QuadConfig,
) -> QuadResult {
    let g = |t: f64| field.eval(&[x[0] + rho * t.cos(), x[1] + rho * t.sin()]);
    let mut cuts = crossing_angles(x, rho, kinks);
    if cuts.is_empty() {
        return periodic_trapezoid(g, cfg);
    }
    cuts.sort_by(f64::total_cmp);
    let mut total = QuadResult::default();
    for i in 0..cuts.len() {
        let a = cuts[i];
        let b = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + 2.0 * PI };
        total = total + tanh_sinh(g, a, b, cfg);
    }
    total
}

fn periodic_trapezoid(g: impl Fn(f64) -> f64, cfg: &QuadConfig) -> QuadResult {
    let mut n = 16usize;
    let mut sum: f64 = (0..n).map(|i| g(2.0 * PI * i as f64 / n as f64)).sum();
    let mut prev = 2.0 * PI * sum / n as f64;
    let mut evals = n;
    while n < 4096 {
        sum += (0..n).map(|i| g(2.0 * PI * (i as f64 + 0.5) / n as f64)).sum::<f64>();
        evals += n;
        n *= 2;
        let cur = 2.0 * PI * sum / n as f64;
        let err = (cur - prev).abs();
        if err <= cfg.abs_tol.max(cfg.rel_tol * cur.abs()) {
            return QuadResult { value: cur, error: err, exceeded: false, evals };
        }
        prev = cur;
    }
    QuadResult { value: prev, error: f64::NAN, exceeded: true, evals }
}

fn integral_2d(field: &(impl ScalarField + ?Sized), x: [f64; 2], s: f64, delta: f64, cfg: &QuadConfig) -> QuadResult {
    let u0 = field.eval(&x);
    let na = cfg.angular_nodes.max(4);
    let (inner, inner_err) = inner_estimate(s, delta, cfg, |rho| {
        let mut acc = 0.0;
        for i in 0..na {
            let t = PI * i as f64 / na as f64;
            let (c, sn) = (rho * t.cos(), rho * t.sin());
            acc += 2.0 * u0 - field.eval(&[x[0] + c, x[1] + sn]) - field.eval(&[x[0] - c, x[1] - sn]);
        }
        acc * PI / na as f64 / (rho * rho)
    });
    let tail = 2.0 * PI * u0 * delta.powf(-2.0 * s) / (2.0 * s);
    let supp = field.support();
    let reach = dist(&x, &supp.center) + supp.radius;
    let kinks: Vec<Kink> = field.kinks().into_iter().filter(|k| k.center.len() == 2).collect();
    let mut cuts = Vec::new();
    for k in &kinks {
        let d = dist(&x, &k.center);
        for r in [(d - k.radius).abs(), d + k.radius] {
            if r > delta && r < reach {
                cuts.push(r.ln());
            }
        }
    }
    let mut stats = QuadResult::default();
    let outer = if reach > delta {
        let br = breakpoints(delta.ln(), reach.ln(), cuts);
        let mut inner_stats = QuadResult::default();
        let r = tanh_sinh_pieces(
            |v| {
                let rho = v.exp();
                let a = circle_integral(field, x, rho, &kinks, cfg);
                inner_stats.exceeded |= a.exceeded;
                inner_stats.evals += a.evals;
                a.value * (-2.0 * s * v).exp()
            },
            &br,
            cfg,
        );
        stats.exceeded = inner_stats.exceeded;
        stats.evals = inner_stats.evals;
        r
    } else {
        QuadResult::default()
    };
    QuadResult {
        value: inner + tail - outer.value,
        error: inner_err + outer.error,
        exceeded: outer.exceeded || stats.exceeded,
        evals: stats.evals + outer.evals,
    }
}

/// Finite-difference weights for the m-th derivative at 0 on the given nodes.
pub fn fornberg_weights(m: usize, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Central difference of order at least 4 for d^m/dx_axis^m with step h.
pub fn central_difference(field: &(impl ScalarField + ?Sized), x: &[f64], axis: usize, m: u32, h: f64) -> f64 {
    let p = (m as i32 - 1) / 2 + 2;
    let offsets: Vec<f64> = (-p..=p).map(|k| k as f64).collect();
    let w = fornberg_weights(m as usize, &offsets);
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for (k, wk) in offsets.iter().zip(&w) {
        y[axis] = x[axis] + k * h;
        acc += wk * field.eval(&y);
    }
    acc / h.powi(m as i32)
}

/// Lambda field at a point.
pub fn lambda_residual_at(
    spec: &OperatorSpec,
    field: &(impl ScalarField + ?Sized),
    point: &[f64],
    cfg: &QuadConfig,
) -> Result<FracValue, Error> {
    if field.dim() != spec.dim() || point.len() != spec.dim() {
        return Err(Error::Domain("field, point and operator dimensions differ".into()));
    }
    let mut total = FracValue::default();
    for (j, term) in spec.local.iter().enumerate() {
        if term.a == 0.0 {
            continue;
        }
        let d = match field.axis_derivative(point, j, term.m) {
            Some(v) => v,
            None => {
                let smooth = field.smooth_radius_at(point).min(field.support().radius);
                let h = 1e-3 * smooth;
                let reach = ((term.m as f64 - 1.0) / 2.0).floor() + 2.0;
                if !(reach * h < field.smooth_radius_at(point)) || !(h > 0.0) {
                    return Err(Error::StencilOutOfRange(reach * h));
                }
                central_difference(field, point, j, term.m, h)
            }
        };
        total.value += term.a * d;
    }
    for (j, term) in spec.nonlocal.iter().enumerate() {
        if term.a == 0.0 {
            continue;
        }
        let block = spec.block(j);
        let slice = Slice::new(field, point, block.clone());
        let v = frac_laplacian_at(&slice, &point[block], term.s, cfg)?;
        total = total
            + FracValue { value: term.a * v.value, error: term.a.abs() * v.error, budget_exceeded: v.budget_exceeded };
    }
    Ok(total)
}
