//! Green kernel of (-Delta)^s on the unit ball,
//! G(x,z) = |z-x|^{2s-n} int_0^{r0} t^{s-1} (t+1)^{-n/2} dt,
//! r0 = (1-|x|^2)(1-|z|^2)/|z-x|^2, and its behavior at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::FracOrder;
use crate::field::{dist, dot, norm, Kink, ScalarField, Sphere};
use crate::quad::{breakpoints, gauss_jacobi, gauss_kronrod, tanh_sinh_pieces, QuadConfig, QuadResult};
use crate::Error;

/// Radius below which the t-integral is taken from its binomial series.
pub const SERIES_RADIUS: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct GreenKernel {
    pub n: u32,
    pub s: FracOrder,
    pub series_terms: usize,
    pub quad: QuadConfig,
    /// c_k = binom(-n/2, k) / (k + s)
    coeffs: Vec<f64>,
    /// Gauss-Jacobi nodes for int_0^1 with the t^{s-1} weight absorbed.
    jacobi_nodes: usize,
}

/// Decomposition of G near the boundary: G = g0 + g1 + tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesSplit {
    pub g0: f64,
    pub g1: f64,
    pub tail: f64,
}

impl SeriesSplit {
    pub fn total(&self) -> f64 {
        self.g0 + self.g1 + self.tail
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoaRow {
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub rows: Vec<GoaRow>,
    /// Set when the limit is 0/0 (vanishing datum) and no ratio is reported.
    pub undefined: bool,
    pub budget_exceeded: bool,
}

/// binom(-n/2, k) / (k + s) for k < terms.
pub fn series_coefficients(n: u32, s: f64, terms: usize) -> Vec<f64> {
    let h = 0.5 * n as f64;
    let mut b = 1.0;
    (0..terms)
        .map(|k| {
            if k > 0 {
                b *= (-h - (k as f64 - 1.0)) / k as f64;
            }
            b / (k as f64 + s)
        })
        .collect()
}

pub fn r0(x: &[f64], z: &[f64]) -> Result<f64, Error> {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
    if d2 == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (nx, nz) = (dot(x, x), dot(z, z));
    if nx >= 1.0 || nz >= 1.0 {
        return Err(Error::Domain("points must lie inside the unit ball".into()));
    }
    Ok((1.0 - nx) * (1.0 - nz) / d2)
}

impl GreenKernel {
    pub fn new(n: u32, s: FracOrder) -> Self {
        let series_terms = 60;
        GreenKernel {
            n,
            s,
            series_terms,
            quad: QuadConfig { rel_tol: 1e-13, abs_tol: 1e-300, max_level: 10, ..QuadConfig::default() },
            coeffs: series_coefficients(n, s.get(), series_terms),
            jacobi_nodes: 30,
        }
    }

    pub fn with_series_terms(mut self, terms: usize) -> Self {
        self.series_terms = terms;
        self.coeffs = series_coefficients(self.n, self.s.get(), terms);
        self
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// int_0^r t^{s-1}(1+t)^{-n/2} dt by quadrature; any r >= 0.
    pub fn integral_quadrature(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let s = self.s.get();
        let h = 0.5 * self.n as f64;
        let head = r.min(1.0);
        // t = head (1 + tau) / 2, weight (1 + tau)^{s-1}
        let rule = gauss_jacobi(self.jacobi_nodes, 0.0, s - 1.0);
        let near = (0.5 * head).powf(s) * rule.integrate(|tau| (1.0 + 0.5 * head * (1.0 + tau)).powf(-h));
        if r <= 1.0 {
            return near;
        }
        // t = e^v on [1, r]
        let far = gauss_kronrod(|v| (s * v).exp() * (1.0 + v.exp()).powf(-h), 0.0, r.ln(), &self.quad);
        near + far.value
    }

    /// Leading and k >= 1 parts of the series for int_0^r, r <= 1/2.
    pub fn integral_series(&self, r: f64) -> Result<(f64, f64), Error> {
        if r > SERIES_RADIUS {
            return Err(Error::SeriesDivergence(r));
        }
        let s = self.s.get();
        let lead = r.powf(s) / s;
        let mut rest = 0.0;
        let mut p = r.powf(s);
        for &c in &self.coeffs[1..] {
            p *= r;
            rest += c * p;
            if p.abs() < 1e-300 {
                break;
            }
        }
        Ok((lead, rest))
    }

    /// int_a^b t^{s-1}(1+t)^{-n/2} dt for 0 < a <= b, by quadrature.
    fn integral_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let s = self.s.get();
        let h = 0.5 * self.n as f64;
        let f = |v: f64| (s * v).exp() * (1.0 + v.exp()).powf(-h);
        gauss_kronrod(f, a.ln(), b.ln(), &self.quad).value
    }

    fn prefactor(&self, x: &[f64], z: &[f64]) -> f64 {
        dist(x, z).powf(2.0 * self.s.get() - self.n as f64)
    }

    /// G(x, z): series when r0 <= 1/2, quadrature otherwise.
    pub fn value(&self, x: &[f64], z: &[f64]) -> Result<f64, Error> {
        let r = r0(x, z)?;
        if r <= SERIES_RADIUS {
            let (a, b) = self.integral_series(r)?;
            Ok(self.prefactor(x, z) * (a + b))
        } else {
            Ok(self.prefactor(x, z) * self.integral_quadrature(r))
        }
    }

    /// G(x, z) with |x - z| = d supplied by the caller; polar rules around x
    /// know d exactly while x + d theta loses it to rounding for tiny d.
    fn value_at_distance(&self, x: &[f64], z: &[f64], d: f64) -> Result<f64, Error> {
        let (nx, nz) = (dot(x, x), dot(z, z));
        if d <= 0.0 {
            return Err(Error::CoincidentPoints);
        }
        if nx >= 1.0 || nz >= 1.0 {
            return Err(Error::Domain("points must lie inside the unit ball".into()));
        }
        let r = (1.0 - nx) * (1.0 - nz) / (d * d);
        let p = d.powf(2.0 * self.s.get() - self.n as f64);
        if r <= SERIES_RADIUS {
            let (a, b) = self.integral_series(r)?;
            Ok(p * (a + b))
        } else {
            Ok(p * self.integral_quadrature(r))
        }
    }

    /// G(x, z) by the quadrature branch regardless of r0.
    pub fn value_quadrature(&self, x: &[f64], z: &[f64]) -> Result<f64, Error> {
        let r = r0(x, z)?;
        Ok(self.prefactor(x, z) * self.integral_quadrature(r))
    }

    /// G = g0 + g1 + tail with r1 = min(r0, 1/2).
    pub fn series_split(&self, x: &[f64], z: &[f64]) -> Result<SeriesSplit, Error> {
        let r = r0(x, z)?;
        let r1 = r.min(SERIES_RADIUS);
        let (a, b) = self.integral_series(r1)?;
        let p = self.prefactor(x, z);
        let tail = if r > r1 { self.integral_between(r1, r) } else { 0.0 };
        Ok(SeriesSplit { g0: p * a, g1: p * b, tail: p * tail })
    }

    /// int_{B_1} f(z) (-2 e.omega)^s (1-|z|^2)^s / (s |z-e|^n) dz.
    pub fn boundary_functional(
        &self,
        f: &(impl ScalarField + ?Sized),
        e: &[f64],
        omega: &[f64],
        cfg: &QuadConfig,
    ) -> Result<QuadResult, Error> {
        let n = self.n as usize;
        check_dims(n, f, &[e, omega])?;
        let eo = dot(e, omega);
        if !(eo < 0.0) {
            return Err(Error::NotInward(eo));
        }
        let s = self.s.get();
        let factor = (-2.0 * eo).powf(s) / s;
        let supp = f.support();
        let kinks = f.kinks();
        let q = match n {
            1 => {
                // z = e (1 - rho), rho = |z - e| in (0, 2)
                let sg = e[0].signum();
                let mut cuts: Vec<f64> = Vec::new();
                for p in sphere_points_1d(&supp, &kinks) {
                    cuts.push(1.0 - sg * p);
                }
                let (lo, hi) = interval_1d(&supp, sg);
                let br = breakpoints(lo.max(0.0), hi.min(2.0), cuts);
                tanh_sinh_pieces(|rho| f.eval(&[sg * (1.0 - rho)]) * rho.powf(s - 1.0) * (2.0 - rho).powf(s), &br, cfg)
            }
            2 => {
                let pe = e[1].atan2(e[0]);
                let cuts = tangent_angles(e, &supp, &kinks);
                let lo = pe + 0.5 * PI;
                let hi = pe + 1.5 * PI;
                let cuts = cuts.into_iter().map(|a| unwrap_angle(a, lo));
                let br = breakpoints(lo, hi, cuts);
                let mut inner_flag = false;
                let r = tanh_sinh_pieces(
                    |phi| {
                        let th = [phi.cos(), phi.sin()];
                        let l = -2.0 * dot(e, &th);
                        if l <= 0.0 {
                            return 0.0;
                        }
                        let hits = ray_hits(e, &th, &supp, &kinks);
                        let rb = breakpoints(0.0, l, hits);
                        let q = tanh_sinh_pieces(
                            |rho| {
                                f.eval(&[e[0] + rho * th[0], e[1] + rho * th[1]])
                                    * rho.powf(s - 1.0)
                                    * (l - rho).powf(s)
                            },
                            &rb,
                            cfg,
                        );
                        inner_flag |= q.exceeded;
                        q.value
                    },
                    &br,
                    cfg,
                );
                QuadResult { exceeded: r.exceeded || inner_flag, ..r }
            }
            _ => return Err(Error::Unsupported(format!("dimension {n}"))),
        };
        Ok(q.scale(factor))
    }

    /// int_{B_1} f(z) G(x, z) dz for x inside the ball.
    pub fn integrate_against(
        &self,
        f: &(impl ScalarField + ?Sized),
        x: &[f64],
        cfg: &QuadConfig,
    ) -> Result<QuadResult, Error> {
        let n = self.n as usize;
        check_dims(n, f, &[x])?;
        if norm(x) >= 1.0 {
            return Ok(QuadResult::default());
        }
        let supp = f.support();
        let kinks = f.kinks();
        let g = |z: &[f64], d: f64| -> f64 {
            let v = f.eval(z);
            if v == 0.0 || dot(z, z) >= 1.0 {
                return 0.0;
            }
            match self.value_at_distance(x, z, d) {
                Ok(gv) => v * gv,
                Err(_) => 0.0,
            }
        };
        match n {
            1 => {
                let mut cuts = sphere_points_1d(&supp, &kinks);
                cuts.push(x[0]);
                let (lo, hi) = ((supp.center[0] - supp.radius).max(-1.0), (supp.center[0] + supp.radius).min(1.0));
                let br = breakpoints(lo, hi, cuts);
                Ok(tanh_sinh_pieces(|z| g(&[z], (z - x[0]).abs()), &br, cfg))
            }
            2 => {
                let cuts = tangent_angles(x, &supp, &kinks);
                let lo = 0.0;
                let br = breakpoints(lo, 2.0 * PI, cuts.into_iter().map(|a| unwrap_angle(a, lo)));
                let mut inner_flag = false;
                let r = tanh_sinh_pieces(
                    |phi| {
                        let th = [phi.cos(), phi.sin()];
                        let xt = dot(x, &th);
                        let rmax = -xt + (xt * xt + 1.0 - dot(x, x)).sqrt();
                        let hits = ray_hits(x, &th, &supp, &kinks);
                        let rb = breakpoints(0.0, rmax, hits);
                        let q =
                            tanh_sinh_pieces(|rho| rho * g(&[x[0] + rho * th[0], x[1] + rho * th[1]], rho), &rb, cfg);
                        inner_flag |= q.exceeded;
                        q.value
                    },
                    &br,
                    cfg,
                );
                Ok(QuadResult { exceeded: r.exceeded || inner_flag, ..r })
            }
            _ => Err(Error::Unsupported(format!("dimension {n}"))),
        }
    }

    /// Rows (eps, eps^{-s} int f G(e + eps omega, .), boundary functional, ratio).
    pub fn verify_goa_limit(
        &self,
        f: &(impl ScalarField + ?Sized),
        e: &[f64],
        omega: &[f64],
        eps: &[f64],
        cfg: &QuadConfig,
    ) -> Result<LimitTable, Error> {
        let rhs = self.boundary_functional(f, e, omega, cfg)?;
        let mut table = LimitTable { budget_exceeded: rhs.exceeded, ..LimitTable::default() };
        if rhs.value == 0.0 {
            table.undefined = true;
            return Ok(table);
        }
        let s = self.s.get();
        let rows = crate::par::map(eps, |&ep| {
            let x: Vec<f64> = e.iter().zip(omega).map(|(a, b)| a + ep * b).collect();
            self.integrate_against(f, &x, cfg).map(|q| (ep, q))
        });
        for r in rows {
            let (ep, q) = r?;
            table.budget_exceeded |= q.exceeded;
            let lhs = ep.powf(-s) * q.value;
            table.rows.push(GoaRow { eps: ep, lhs, rhs: rhs.value, ratio: lhs / rhs.value });
        }
        Ok(table)
    }
}

/// int over `ball` of f, with breakpoints at the given spheres (n = 1, 2).
pub fn integrate_ball(
    f: impl Fn(&[f64]) -> f64,
    ball: &Sphere,
    kinks: &[Kink],
    extra_cuts_1d: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult, Error> {
    let c = &ball.center;
    match c.len() {
        1 => {
            let mut cuts = sphere_points_1d(ball, kinks);
            cuts.extend_from_slice(extra_cuts_1d);
            let br = breakpoints(c[0] - ball.radius, c[0] + ball.radius, cuts);
            Ok(tanh_sinh_pieces(|z| f(&[z]), &br, cfg))
        }
        2 => {
            let cuts = tangent_angles(c, ball, kinks);
            let br = breakpoints(0.0, 2.0 * PI, cuts.into_iter().map(|a| unwrap_angle(a, 0.0)));
            let mut inner_flag = false;
            let r = tanh_sinh_pieces(
                |phi| {
                    let th = [phi.cos(), phi.sin()];
                    let hits = ray_hits(c, &th, ball, kinks);
                    let rb = breakpoints(0.0, ball.radius, hits);
                    let q = tanh_sinh_pieces(|rho| rho * f(&[c[0] + rho * th[0], c[1] + rho * th[1]]), &rb, cfg);
                    inner_flag |= q.exceeded;
                    q.value
                },
                &br,
                cfg,
            );
            Ok(QuadResult { exceeded: r.exceeded || inner_flag, ..r })
        }
        n => Err(Error::Unsupported(format!("dimension {n}"))),
    }
}

fn check_dims(n: usize, f: &(impl ScalarField + ?Sized), pts: &[&[f64]]) -> Result<(), Error> {
    if f.dim() != n || pts.iter().any(|p| p.len() != n) {
        return Err(Error::Domain(format!("expected dimension {n}")));
    }
    Ok(())
}

/// Endpoints of the support interval and kink points on the line.
pub(crate) fn sphere_points_1d(supp: &Sphere, kinks: &[Kink]) -> Vec<f64> {
    let mut v = vec![supp.center[0] - supp.radius, supp.center[0] + supp.radius];
    for k in kinks {
        if k.center.len() == 1 {
            v.push(k.center[0] - k.radius);
            v.push(k.center[0] + k.radius);
        }
    }
    v
}

// rho-range of the support for z = sg (1 - rho)
fn interval_1d(supp: &Sphere, sg: f64) -> (f64, f64) {
    let a = 1.0 - sg * (supp.center[0] - supp.radius);
    let b = 1.0 - sg * (supp.center[0] + supp.radius);
    (a.min(b), a.max(b))
}

/// Distances along the ray x + rho theta at which it crosses the given spheres.
pub(crate) fn ray_hits(x: &[f64], th: &[f64], supp: &Sphere, kinks: &[Kink]) -> Vec<f64> {
    let mut out = Vec::new();
    let spheres = std::iter::once((supp.center.as_slice(), supp.radius))
        .chain(kinks.iter().filter(|k| k.center.len() == x.len()).map(|k| (k.center.as_slice(), k.radius)));
    for (c, r) in spheres {
        let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let b = dot(th, &d);
        let disc = b * b - (dot(&d, &d) - r * r);
        if disc > 0.0 {
            let sq = disc.sqrt();
            for t in [-b - sq, -b + sq] {
                if t > 0.0 {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// Directions from x tangent to the given circles.
pub(crate) fn tangent_angles(x: &[f64], supp: &Sphere, kinks: &[Kink]) -> Vec<f64> {
    let mut out = Vec::new();
    let spheres = std::iter::once((supp.center.as_slice(), supp.radius))
        .chain(kinks.iter().filter(|k| k.center.len() == 2).map(|k| (k.center.as_slice(), k.radius)));
    for (c, r) in spheres {
        let d = [c[0] - x[0], c[1] - x[1]];
        let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if dn > r && dn > 0.0 {
            let base = d[1].atan2(d[0]);
            let a = (r / dn).asin();
            out.push(base - a);
            out.push(base + a);
        }
    }
    out
}

pub(crate) fn unwrap_angle(a: f64, lo: f64) -> f64 {
    lo + (a - lo).rem_euclid(2.0 * PI)
}
