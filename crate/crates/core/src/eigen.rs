//! Principal Dirichlet eigenpair of (-Delta)^s on the unit ball.
//!
//! The radial eigenfunction is expanded as
//! phi(r) = (1-r^2)^s sum_k c_k P_k^{(s, n/2-1)}(2r^2-1).
//! Each basis function is mapped by (-Delta)^s to a multiple of the same
//! polynomial, so the stiffness matrix is diagonal and the mass matrix is
//! assembled with Gauss-Jacobi quadrature. The dominant eigenvalue of
//! A^{-1} B is found by power iteration.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{ln_gamma, Constants, FracOrder};
use crate::field::{dot, norm, Kink, ScalarField, Sphere};
use crate::green::{integrate_ball, GoaRow, GreenKernel, LimitTable};
use crate::jacobi::{jacobi_all, jacobi_series, jacobi_series_derivative};
use crate::jet::{Jet, MultiIndexSet};
use crate::quad::{gauss_jacobi, QuadConfig};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    /// Number of radial basis functions.
    pub basis: usize,
    /// Quadrature nodes for the mass matrix; 0 picks basis + 8.
    pub nodes: usize,
    pub max_iter: usize,
    /// Relative change of successive Rayleigh quotients at convergence.
    pub tol: f64,
    /// Samples of the stored radial profile.
    pub profile_points: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { basis: 64, nodes: 0, max_iter: 10_000, tol: 1e-12, profile_points: 256 }
    }
}

impl EigenConfig {
    pub fn doubled(&self) -> Self {
        EigenConfig { basis: 2 * self.basis, nodes: 2 * self.nodes, ..*self }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenPair {
    pub n: u32,
    pub s: FracOrder,
    pub lambda_star: f64,
    pub kappa_star: f64,
    /// Coefficients c_k of the Jacobi expansion.
    pub coeffs: Vec<f64>,
    /// (r, phi(r)) on the graded grid r_j = 1 - (1 - j/J)^2.
    pub profile: Vec<(f64, f64)>,
    pub rayleigh_history: Vec<f64>,
}

fn sphere_area(n: u32) -> f64 {
    match n {
        1 => 2.0,
        _ => 2.0 * PI.powf(n as f64 / 2.0) / crate::constants::gamma_unchecked(n as f64 / 2.0),
    }
}

/// Eigenvalue of (-Delta)^s on (1-r^2)^s P_k^{(s,n/2-1)}(2r^2-1).
pub fn basis_multiplier(n: u32, s: f64, k: usize) -> f64 {
    let h = n as f64 / 2.0;
    let k = k as f64;
    (s * 4f64.ln() + ln_gamma(1.0 + s + k) + ln_gamma(h + s + k) - ln_gamma(k + 1.0) - ln_gamma(h + k)).exp()
}

pub fn principal_eigenpair(n: u32, s: FracOrder, cfg: &EigenConfig) -> Result<EigenPair, Error> {
    if !(1..=2).contains(&n) {
        return Err(Error::Unsupported(format!("dimension {n}")));
    }
    if cfg.basis == 0 {
        return Err(Error::Domain("empty basis".into()));
    }
    let sv = s.get();
    let m = cfg.basis;
    let q = if cfg.nodes == 0 { m + 8 } else { cfg.nodes.max(m) };
    let (a, b) = (sv, n as f64 / 2.0 - 1.0);
    let area = sphere_area(n);

    // Stiffness: diagonal mu_k * ||b_k||_{(1-r^2)^s}^2.
    let ra = gauss_jacobi(q, a, b);
    let pre_a = area / 4.0 * 0.5f64.powf(a) * 0.5f64.powf(b);
    let mut norms = vec![0.0; m];
    let mut p = vec![0.0; m];
    for (&t, &w) in ra.nodes.iter().zip(&ra.weights) {
        jacobi_all(a, b, t, &mut p);
        for k in 0..m {
            norms[k] += w * p[k] * p[k];
        }
    }
    let adiag: Vec<f64> = (0..m).map(|k| basis_multiplier(n, sv, k) * pre_a * norms[k]).collect();

    // Mass: int (1-r^2)^{2s} P_j P_k dx.
    let rb = gauss_jacobi(q, 2.0 * sv, b);
    let pre_b = area / 4.0 * 0.5f64.powf(2.0 * sv) * 0.5f64.powf(b);
    let mut bm = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (&t, &w) in rb.nodes.iter().zip(&rb.weights) {
        jacobi_all(a, b, t, &mut p);
        for j in 0..m {
            let wj = pre_b * w * p[j];
            for k in 0..=j {
                bm[(j, k)] += wj * p[k];
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            bm[(k, j)] = bm[(j, k)];
        }
    }

    let bnorm = |c: &nalgebra::DVector<f64>| c.dot(&(&bm * c));
    let mut c = nalgebra::DVector::<f64>::zeros(m);
    c[0] = 1.0;
    c /= bnorm(&c).sqrt();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let y = &bm * &c;
        let mut next = nalgebra::DVector::from_iterator(m, y.iter().zip(&adiag).map(|(v, d)| v / d));
        next /= bnorm(&next).sqrt();
        let an: f64 = next.iter().zip(&adiag).map(|(v, d)| v * v * d).sum();
        let rq = 1.0 / an;
        if let Some(&last) = history.last() {
            change = ((rq - last) / rq).abs();
        }
        history.push(rq);
        let vchange = (&next - &c).amax();
        c = next;
        if change < cfg.tol && vchange < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: cfg.max_iter, change });
    }
    let an: f64 = c.iter().zip(&adiag).map(|(v, d)| v * v * d).sum();
    let lambda = an / bnorm(&c);
    let mut coeffs: Vec<f64> = c.iter().copied().collect();
    if jacobi_series(&coeffs, a, b, -1.0) < 0.0 {
        coeffs.iter_mut().for_each(|v| *v = -*v);
    }
    let mut pair = EigenPair {
        n,
        s,
        lambda_star: lambda,
        kappa_star: 0.0,
        coeffs,
        profile: Vec::new(),
        rayleigh_history: history,
    };
    let jn = cfg.profile_points.max(2);
    pair.profile = (0..=jn)
        .map(|j| {
            let u = 1.0 - j as f64 / jn as f64;
            let r = 1.0 - u * u;
            (r, pair.phi(r))
        })
        .collect();
    let mut e = vec![0.0; n as usize];
    e[0] = 1.0;
    pair.kappa_star = kappa_star(&pair, &e, &QuadConfig::default())?;
    Ok(pair)
}

impl EigenPair {
    fn ab(&self) -> (f64, f64) {
        (self.s.get(), self.n as f64 / 2.0 - 1.0)
    }

    /// V(q) = sum c_k P_k(2q - 1), so that phi = (1-q)^s V(q) with q = r^2.
    pub fn smooth_factor(&self, q: f64) -> f64 {
        let (a, b) = self.ab();
        jacobi_series(&self.coeffs, a, b, 2.0 * q - 1.0)
    }

    /// Radial profile; zero for r >= 1.
    pub fn phi(&self, r: f64) -> f64 {
        let q = r * r;
        if q >= 1.0 {
            return 0.0;
        }
        (1.0 - q).powf(self.s.get()) * self.smooth_factor(q)
    }

    /// Derivatives d^i/dq^i of Phi(q) = (1-q)^s V(q), i = 0..=order, for q < 1.
    pub fn phi_q_derivatives(&self, q: f64, order: usize) -> Vec<f64> {
        let (a, b) = self.ab();
        let s = self.s.get();
        let t = 2.0 * q - 1.0;
        let v: Vec<f64> =
            (0..=order).map(|l| 2f64.powi(l as i32) * jacobi_series_derivative(&self.coeffs, a, b, t, l)).collect();
        let mut w = Vec::with_capacity(order + 1);
        let mut fall = 1.0;
        for j in 0..=order {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            w.push(sign * fall * (1.0 - q).powf(s - j as f64));
            fall *= s - j as f64;
        }
        (0..=order)
            .map(|i| {
                let mut binom = 1.0;
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += binom * w[j] * v[i - j];
                    binom *= (i - j) as f64 / (j + 1) as f64;
                }
                acc
            })
            .collect()
    }

    /// Jet of phi(Z/r) given the jet of Z (one jet per coordinate); zero
    /// outside the ball and None on its boundary.
    pub fn radial_jet(&self, z: &[Jet], radius: f64) -> Option<Jet> {
        let set = z[0].set.clone();
        let mut q = Jet::constant(&set, 0.0);
        for zi in z {
            q = q.add(&zi.mul(zi));
        }
        let q = q.scale(1.0 / (radius * radius));
        let q0 = q.value();
        if q0 > 1.0 {
            return Some(Jet::constant(&set, 0.0));
        }
        if q0 == 1.0 {
            return None;
        }
        Some(q.compose(&self.phi_q_derivatives(q0, set.order)))
    }

    /// Least-squares slope of log phi(1 - delta) against log delta.
    pub fn boundary_decay_slope(&self, deltas: &[f64]) -> f64 {
        let pts: Vec<(f64, f64)> = deltas.iter().map(|&d| (d.ln(), self.phi(1.0 - d).ln())).collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

fn axis_jet_derivative(pair: &EigenPair, z: &[f64], radius: f64, axis: usize, order: u32) -> Option<f64> {
    let set = MultiIndexSet::get(1, order as usize);
    let jets: Vec<Jet> = z
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == axis { Jet::variable(&set, 0, v) } else { Jet::constant(&set, v) })
        .collect();
    pair.radial_jet(&jets, radius).map(|j| *j.derivatives().last().unwrap())
}

impl ScalarField for EigenPair {
    fn dim(&self) -> usize {
        self.n as usize
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.phi(norm(x))
    }
    fn support(&self) -> Sphere {
        Sphere::centered(self.n as usize, 1.0)
    }
    fn kinks(&self) -> Vec<Kink> {
        vec![Kink::sphere(vec![0.0; self.n as usize], 1.0)]
    }
    fn axis_derivative(&self, x: &[f64], axis: usize, order: u32) -> Option<f64> {
        axis_jet_derivative(self, x, 1.0, axis, order)
    }
}

/// kappa_star(e) = 2^s kappa(n,s) int phi(z) (1-|z|^2)^s / (s |z-e|^n) dz.
pub fn kappa_star(pair: &EigenPair, e: &[f64], cfg: &QuadConfig) -> Result<f64, Error> {
    if (norm(e) - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("e must be a unit vector".into()));
    }
    let kernel = GreenKernel::new(pair.n, pair.s);
    let omega: Vec<f64> = e.iter().map(|v| -v).collect();
    let kappa = Constants::get(pair.n, pair.s)?.kappa_green;
    Ok(kappa * kernel.boundary_functional(pair, e, &omega, cfg)?.value)
}

/// Rows (eps, eps^{-s} phi(e + eps omega), kappa* lambda* (-e.omega)_+^s, ratio).
/// For e.omega >= 0 the limit is 0 and the table is marked undefined.
pub fn verify_eigen_boundary(pair: &EigenPair, e: &[f64], omega: &[f64], eps: &[f64]) -> LimitTable {
    let s = pair.s.get();
    let eo = dot(e, omega);
    let rhs = if eo < 0.0 { pair.kappa_star * pair.lambda_star * (-eo).powf(s) } else { 0.0 };
    let mut table = LimitTable { undefined: rhs == 0.0, ..LimitTable::default() };
    for &ep in eps {
        let x: Vec<f64> = e.iter().zip(omega).map(|(a, b)| a + ep * b).collect();
        let lhs = ep.powf(-s) * pair.eval(&x);
        let ratio = if table.undefined { f64::NAN } else { lhs / rhs };
        table.rows.push(GoaRow { eps: ep, lhs, rhs, ratio });
    }
    table
}

/// Smooth bump test function exp(1 - 1/(1 - |X-c|^2/rho^2)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestBump {
    /// All derivatives of order <= `order` at X, in the order of MultiIndexSet.
    pub fn derivatives(&self, x: &[f64], order: usize) -> (Arc<MultiIndexSet>, Vec<f64>) {
        let n = x.len();
        let set = MultiIndexSet::get(n, order);
        let mut q = Jet::constant(&set, 0.0);
        for i in 0..n {
            let d = Jet::variable(&set, i, x[i] - self.center[i]);
            q = q.add(&d.mul(&d));
        }
        let q = q.scale(1.0 / (self.radius * self.radius));
        let q0 = q.value();
        if q0 >= 1.0 {
            return (set.clone(), vec![0.0; set.len()]);
        }
        // g(q) = -1/(1-q), g^(j) = -j!/(1-q)^{j+1}
        let mut gd = Vec::with_capacity(order + 1);
        let mut fact = 1.0;
        for j in 0..=order {
            if j > 0 {
                fact *= j as f64;
            }
            gd.push(-fact / (1.0 - q0).powi(j as i32 + 1));
        }
        let g = q.compose(&gd);
        let ex = (1.0 + g.value()).exp();
        let out = g.compose(&vec![ex; order + 1]);
        (set, out.derivatives())
    }

    pub fn derivative(&self, x: &[f64], alpha: &[u32]) -> f64 {
        let order: u32 = alpha.iter().sum();
        let (set, d) = self.derivatives(x, order as usize);
        d[set.position(alpha).unwrap()]
    }

    pub fn ball(&self) -> Sphere {
        Sphere::new(self.center.clone(), self.radius)
    }
}

/// Distributional boundary limit of phi: rows with
/// lhs = eps^{-s} (-1)^{|alpha|} int phi(e + eps X) d^alpha psi(X) dX and
/// rhs = (-1)^{|alpha|} k* l* s(s-1)..(s-|alpha|+1) e^alpha int (-e.X)_+^{s-|alpha|} psi(X) dX.
pub fn verify_distributional_derivatives(
    pair: &EigenPair,
    e: &[f64],
    alpha: &[u32],
    psi: &TestBump,
    eps: &[f64],
    cfg: &QuadConfig,
) -> Result<LimitTable, Error> {
    let n = pair.n as usize;
    if e.len() != n || alpha.len() != n || psi.center.len() != n {
        return Err(Error::Domain(format!("expected dimension {n}")));
    }
    let order: u32 = alpha.iter().sum();
    if order > 3 {
        return Err(Error::Domain(format!("|alpha| = {order} exceeds 3")));
    }
    let s = pair.s.get();
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    let ball = psi.ball();
    // Signed distance of the bump support to the hyperplane e.X = 0.
    let ec = dot(e, &psi.center);
    let crosses = ec.abs() < psi.radius;
    let expo = s - order as f64;
    if crosses && (expo <= -1.0 || n > 1) {
        return Err(Error::Unsupported("test function support crosses the limit hyperplane".into()));
    }
    let mut fall = 1.0;
    for j in 0..order {
        fall *= s - j as f64;
    }
    let e_alpha: f64 = e.iter().zip(alpha).map(|(v, &a)| v.powi(a as i32)).product();
    let halfspace = integrate_ball(
        |x| {
            let h = -dot(e, x);
            if h > 0.0 {
                h.powf(expo) * crate::field::bump_value(crate::field::dist(x, &psi.center) / psi.radius)
            } else {
                0.0
            }
        },
        &ball,
        &[],
        &[0.0],
        cfg,
    )?;
    let rhs = sign * pair.kappa_star * pair.lambda_star * fall * e_alpha * halfspace.value;
    let mut table = LimitTable { undefined: rhs == 0.0, budget_exceeded: halfspace.exceeded, ..LimitTable::default() };
    for &ep in eps {
        // phi(e + eps X) is singular on the sphere |X + e/eps| = 1/eps.
        let center: Vec<f64> = e.iter().map(|v| -v / ep).collect();
        let kink = Kink::sphere(center, 1.0 / ep);
        let q = integrate_ball(
            |x| {
                let y: Vec<f64> = e.iter().zip(x).map(|(a, b)| a + ep * b).collect();
                let ph = pair.eval(&y);
                if ph == 0.0 {
                    0.0
                } else {
                    ph * psi.derivative(x, alpha)
                }
            },
            &ball,
            &[kink],
            &[],
            cfg,
        )?;
        table.budget_exceeded |= q.exceeded;
        let lhs = sign * ep.powf(-s) * q.value;
        let ratio = if table.undefined { f64::NAN } else { lhs / rhs };
        table.rows.push(GoaRow { eps: ep, lhs, rhs, ratio });
    }
    Ok(table)
}

/// X -> phi*((X - center) / r) with r = (lambda*/lambda_target)^{1/(2s)}; a
/// Dirichlet eigenfunction with eigenvalue lambda_target on the shifted ball.
#[derive(Clone, Debug)]
pub struct ScaledEigenfunction {
    pub base: Arc<EigenPair>,
    pub lambda_target: f64,
    pub radius: f64,
    pub center: Vec<f64>,
}

pub fn scaled_eigenfunction(
    pair: Arc<EigenPair>,
    lambda_target: f64,
    center: Vec<f64>,
) -> Result<ScaledEigenfunction, Error> {
    if !(lambda_target > 0.0) {
        return Err(Error::Domain(format!("lambda_target = {lambda_target}")));
    }
    if center.len() != pair.n as usize {
        return Err(Error::Domain("center has the wrong dimension".into()));
    }
    let radius = (pair.lambda_star / lambda_target).powf(1.0 / (2.0 * pair.s.get()));
    Ok(ScaledEigenfunction { base: pair, lambda_target, radius, center })
}

impl ScaledEigenfunction {
    fn local(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| a - c).collect()
    }
}

impl ScalarField for ScaledEigenfunction {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.base.phi(norm(&self.local(x)) / self.radius)
    }
    fn support(&self) -> Sphere {
        Sphere::new(self.center.clone(), self.radius)
    }
    fn kinks(&self) -> Vec<Kink> {
        vec![Kink::sphere(self.center.clone(), self.radius)]
    }
    fn axis_derivative(&self, x: &[f64], axis: usize, order: u32) -> Option<f64> {
        axis_jet_derivative(&self.base, &self.local(x), self.radius, axis, order)
    }
}
