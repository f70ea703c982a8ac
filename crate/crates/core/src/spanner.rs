//! Lambda-harmonic dictionary elements and the span of their derivatives at
//! the origin.
//!
//! With local terms (d >= 1) an element is
//! w(x, X) = tau(x) prod_j vbar_j(t_j x_j) prod_j phi*_j((X_j + p_j) / r_j),
//! where the local rates |a_j| t_j^{m_j} are balanced against the eigenvalues
//! of the scaled eigenfunctions. Without local terms an element is a product
//! of s-harmonic pieces h_R(X_j + p_j) with
//! h_R(Z) = (R^2 - |Z|^2)_+^s - (1 - |Z|^2)_+^s, which satisfies
//! (-Delta)^s h_R = 0 in the unit ball for every R > 1.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::EigenPair;
use crate::field::{dot, norm, Kink, ScalarField, Sphere};
use crate::fracop::OperatorSpec;
use crate::jet::{factorial, Jet, MultiIndexSet};
use crate::Error;

/// Solution of a vbar^{(m)} = -abar vbar with vbar^{(i)}(0) = 1 for i < m.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub m: u32,
    pub a_bar: f64,
    pub roots: Vec<Complex64>,
    pub coefficients: Vec<Complex64>,
    /// d^i vbar(0) for i <= k_max.
    pub table: Vec<f64>,
}

pub fn ode_solve(m: u32, a_bar: f64, k_max: usize) -> Result<OdeSolution, Error> {
    if m == 0 || a_bar.abs() != 1.0 {
        return Err(Error::Domain(format!("ode_solve needs m >= 1 and |a_bar| = 1, got m={m}, a_bar={a_bar}")));
    }
    let mm = m as usize;
    // r^m = -abar: roots of unity rotated by pi/m when -abar = -1.
    let base = if a_bar > 0.0 { PI / m as f64 } else { 0.0 };
    let roots: Vec<Complex64> =
        (0..mm).map(|l| Complex64::from_polar(1.0, base + 2.0 * PI * l as f64 / m as f64)).collect();
    let vander = DMatrix::from_fn(mm, mm, |i, l| roots[l].powu(i as u32));
    let rhs = DVector::from_element(mm, Complex64::new(1.0, 0.0));
    let coefficients: Vec<Complex64> = vander
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("singular Vandermonde system".into()))?
        .iter()
        .copied()
        .collect();
    let mut table = vec![1.0; k_max + 1];
    for i in mm..=k_max {
        table[i] = -a_bar * table[i - mm];
    }
    Ok(OdeSolution { m, a_bar, roots, coefficients, table })
}

impl OdeSolution {
    /// d^i vbar at x from the exponential combination.
    pub fn derivative(&self, x: f64, i: u32) -> f64 {
        self.roots.iter().zip(&self.coefficients).map(|(r, c)| (c * r.powu(i) * (r * x).exp()).re).sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    /// Taylor coefficients of vbar(t y) in y at y = y0, up to `order`.
    fn scaled_taylor(&self, t: f64, y0: f64, order: usize) -> Vec<f64> {
        (0..=order)
            .map(|i| {
                let d =
                    if y0 == 0.0 && i < self.table.len() { self.table[i] } else { self.derivative(t * y0, i as u32) };
                t.powi(i as i32) * d / factorial(i)
            })
            .collect()
    }
}

/// lambda_j = lambda*_j for j != b and lambda_b = (sum |a_j| t_j^{m_j} - sum_{j != b} A_j lambda_j) / A_b,
/// with b the last block of positive A. Returns None when lambda_b <= 0.
pub fn balance_rates(spec: &OperatorSpec, t: &[f64], eigenvalues: &[f64]) -> Result<Option<Vec<f64>>, Error> {
    if t.len() != spec.d() || eigenvalues.len() != spec.nonlocal.len() {
        return Err(Error::Domain("rate vector or eigenvalue list has the wrong length".into()));
    }
    let b = spec
        .nonlocal
        .iter()
        .rposition(|term| term.a > 0.0)
        .ok_or_else(|| Error::Unsupported("no nonlocal term with positive coefficient".into()))?;
    let local: f64 = spec.local.iter().zip(t).map(|(term, &tj)| term.a.abs() * tj.powi(term.m as i32)).sum();
    let mut lambdas = eigenvalues.to_vec();
    let others: f64 =
        spec.nonlocal.iter().zip(&lambdas).enumerate().filter(|(j, _)| *j != b).map(|(_, (term, l))| term.a * l).sum();
    lambdas[b] = (local - others) / spec.nonlocal[b].a;
    Ok(if lambdas[b] > 0.0 { Some(lambdas) } else { None })
}

/// Free parameters of one dictionary element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementParams {
    /// d >= 1: local rates t, boundary points e_j with |e_j| = r_j, inward offsets Y_j.
    Eigen { t: Vec<f64>, e: Vec<Vec<f64>>, y: Vec<Vec<f64>>, eps: f64 },
    /// d = 0: outer radii R_j > 1, unit vectors e_j, inward offsets Y_j.
    Harmonic { radii: Vec<f64>, e: Vec<Vec<f64>>, y: Vec<Vec<f64>>, eps: f64 },
}

#[derive(Clone, Debug)]
enum BlockFactor {
    Eigen { pair: Arc<EigenPair>, radius: f64 },
    Harmonic { s: f64, outer: f64 },
}

impl BlockFactor {
    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            BlockFactor::Eigen { pair, radius } => pair.phi(norm(z) / radius),
            BlockFactor::Harmonic { s, outer } => {
                let q = dot(z, z);
                let pos = |c: f64| if c > q { (c - q).powf(*s) } else { 0.0 };
                pos(outer * outer) - pos(1.0)
            }
        }
    }

    fn jet(&self, z: &[Jet]) -> Option<Jet> {
        match self {
            BlockFactor::Eigen { pair, radius } => pair.radial_jet(z, *radius),
            BlockFactor::Harmonic { s, outer } => {
                let set = z[0].set.clone();
                let mut q = Jet::constant(&set, 0.0);
                for zi in z {
                    q = q.add(&zi.mul(zi));
                }
                let q0 = q.value();
                if q0 == 1.0 || q0 == outer * outer {
                    return None;
                }
                let mut g = vec![0.0; set.order + 1];
                for c in [outer * outer, 1.0] {
                    if c <= q0 {
                        continue;
                    }
                    let sign = if c == 1.0 { -1.0 } else { 1.0 };
                    let mut fall = 1.0;
                    for (k, gk) in g.iter_mut().enumerate() {
                        let pm = if k % 2 == 0 { 1.0 } else { -1.0 };
                        *gk += sign * pm * fall * (c - q0).powf(s - k as f64);
                        fall *= s - k as f64;
                    }
                }
                Some(q.compose(&g))
            }
        }
    }

    fn spheres(&self) -> Vec<f64> {
        match self {
            BlockFactor::Eigen { radius, .. } => vec![*radius],
            BlockFactor::Harmonic { outer, .. } => vec![1.0, *outer],
        }
    }
}

/// Smooth step: 0 for u <= 0, 1 for u >= 1.
fn smooth_step(u: f64) -> f64 {
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        psi(u) / (psi(u) + psi(1.0 - u))
    }
}

/// Cutoff in the local variables: 1 on |x| <= rho/2, 0 outside |x| < rho.
pub fn cutoff(x: &[f64], rho: f64) -> f64 {
    let q = dot(x, x);
    smooth_step((rho * rho - q) / (0.75 * rho * rho))
}

#[derive(Clone, Debug)]
pub struct DictionaryElement {
    pub spec: OperatorSpec,
    pub params: ElementParams,
    /// Eigenvalues of the nonlocal factors (balanced for d >= 1, zero for d = 0).
    pub rates: Vec<f64>,
    /// Centers -p_j of the nonlocal factors, p_j = e_j + eps Y_j.
    pub centers: Vec<Vec<f64>>,
    /// Cutoff radius of tau.
    pub rho: f64,
    /// Lambda w = 0 on the ball of this radius around the origin.
    pub neighborhood: f64,
    odes: Vec<OdeSolution>,
    t: Vec<f64>,
    factors: Vec<BlockFactor>,
}

pub const CUTOFF_RADIUS: f64 = 1.0;

fn check_geometry(spec: &OperatorSpec, e: &[Vec<f64>], y: &[Vec<f64>], eps: f64) -> Result<(), Error> {
    let nb = spec.nonlocal.len();
    if e.len() != nb || y.len() != nb {
        return Err(Error::Geometry("one direction and one offset per nonlocal block".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Geometry(format!("eps = {eps}")));
    }
    for (j, (ej, yj)) in e.iter().zip(y).enumerate() {
        let n = spec.nonlocal[j].n as usize;
        if ej.len() != n || yj.len() != n {
            return Err(Error::Geometry(format!("block {j} has dimension {n}")));
        }
        if !(dot(ej, yj) < 0.0) {
            return Err(Error::Geometry(format!("offset of block {j} is not inward")));
        }
    }
    Ok(())
}

pub fn build_element(
    spec: &OperatorSpec,
    params: &ElementParams,
    eigenpairs: &[Arc<EigenPair>],
) -> Result<DictionaryElement, Error> {
    spec.validate()?;
    let rho = CUTOFF_RADIUS;
    let nb = spec.nonlocal.len();
    let (e, y, eps) = match params {
        ElementParams::Eigen { e, y, eps, .. } | ElementParams::Harmonic { e, y, eps, .. } => (e, y, *eps),
    };
    check_geometry(spec, e, y, eps)?;
    let centers: Vec<Vec<f64>> =
        e.iter().zip(y).map(|(ej, yj)| ej.iter().zip(yj).map(|(a, b)| -(a + eps * b)).collect()).collect();
    let (rates, factors, odes, t) = match params {
        ElementParams::Eigen { t, .. } => {
            if spec.d() == 0 {
                return Err(Error::Unsupported("eigen elements need local terms; use harmonic elements".into()));
            }
            if eigenpairs.len() != nb {
                return Err(Error::Domain("one eigenpair per nonlocal block".into()));
            }
            for (j, p) in eigenpairs.iter().enumerate() {
                if p.n != spec.nonlocal[j].n || p.s != spec.nonlocal[j].s {
                    return Err(Error::Domain(format!("eigenpair {j} does not match its block")));
                }
            }
            if t.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Domain("local rates must be positive".into()));
            }
            let stars: Vec<f64> = eigenpairs.iter().map(|p| p.lambda_star).collect();
            let rates = balance_rates(spec, t, &stars)?
                .ok_or_else(|| Error::Geometry("rate vector outside the admissible set".into()))?;
            let mut factors = Vec::with_capacity(nb);
            for j in 0..nb {
                let s = spec.nonlocal[j].s.get();
                let radius = (stars[j] / rates[j]).powf(1.0 / (2.0 * s));
                if ((norm(&e[j]) - radius) / radius).abs() > 1e-12 {
                    return Err(Error::Geometry(format!("|e_{j}| = {} differs from r_{j} = {radius}", norm(&e[j]))));
                }
                factors.push(BlockFactor::Eigen { pair: eigenpairs[j].clone(), radius });
            }
            let odes = spec
                .local
                .iter()
                .map(|term| ode_solve(term.m, if term.a < 0.0 { -1.0 } else { 1.0 }, 0))
                .collect::<Result<Vec<_>, _>>()?;
            (rates, factors, odes, t.clone())
        }
        ElementParams::Harmonic { radii, .. } => {
            if spec.d() != 0 {
                return Err(Error::Unsupported("harmonic elements are for purely nonlocal operators".into()));
            }
            if radii.len() != nb || radii.iter().any(|&r| !(r > 1.0)) {
                return Err(Error::Geometry("one outer radius > 1 per block".into()));
            }
            for (j, ej) in e.iter().enumerate() {
                if (norm(ej) - 1.0).abs() > 1e-12 {
                    return Err(Error::Geometry(format!("|e_{j}| must be 1")));
                }
            }
            let factors = radii
                .iter()
                .zip(&spec.nonlocal)
                .map(|(&r, term)| BlockFactor::Harmonic { s: term.s.get(), outer: r })
                .collect();
            (vec![0.0; nb], factors, Vec::new(), Vec::new())
        }
    };
    let mut neighborhood = if spec.d() > 0 { rho / 2.0 } else { f64::INFINITY };
    for (c, f) in centers.iter().zip(&factors) {
        let inner = f.spheres()[0];
        let gap = inner - norm(c);
        if !(gap > 0.0) {
            return Err(Error::Geometry("the origin is not inside the shifted ball".into()));
        }
        neighborhood = neighborhood.min(gap);
    }
    Ok(DictionaryElement {
        spec: spec.clone(),
        params: params.clone(),
        rates,
        centers,
        rho,
        neighborhood: 0.9 * neighborhood,
        odes,
        t,
        factors,
    })
}

impl DictionaryElement {
    /// Taylor jet of w at `point` up to `order`; None where the factorized form
    /// is not smooth or the cutoff is not identically 1.
    pub fn jet_at(&self, point: &[f64], order: usize) -> Option<Jet> {
        let nu = self.spec.dim();
        let set = MultiIndexSet::get(nu, order);
        let d = self.spec.d();
        if d > 0 && norm(&point[..d]) >= 0.5 * self.rho {
            return None;
        }
        let mut w = Jet::constant(&set, 1.0);
        for j in 0..d {
            let c = self.odes[j].scaled_taylor(self.t[j], point[j], order);
            w = w.mul(&Jet::univariate(&set, j, &c));
        }
        for (j, f) in self.factors.iter().enumerate() {
            let block = self.spec.block(j);
            let z: Vec<Jet> =
                block.clone().zip(&self.centers[j]).map(|(i, c)| Jet::variable(&set, i, point[i] - c)).collect();
            w = w.mul(&f.jet(&z)?);
        }
        Some(w)
    }

    /// All derivatives of order <= k at the origin, graded-lex order.
    pub fn origin_derivatives(&self, k: usize) -> Vec<f64> {
        let zero = vec![0.0; self.spec.dim()];
        self.jet_at(&zero, k).expect("origin lies in the smooth region by construction").derivatives()
    }

    fn support_radius(&self) -> f64 {
        let mut r2 = if self.spec.d() > 0 { self.rho * self.rho } else { 0.0 };
        for (c, f) in self.centers.iter().zip(&self.factors) {
            let outer = f.spheres().into_iter().fold(0.0, f64::max);
            r2 += (norm(c) + outer).powi(2);
        }
        r2.sqrt()
    }
}

impl ScalarField for DictionaryElement {
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.spec.d();
        let mut v = if d > 0 { cutoff(&x[..d], self.rho) } else { 1.0 };
        if v == 0.0 {
            return 0.0;
        }
        for (j, f) in self.factors.iter().enumerate() {
            let block = self.spec.block(j);
            let z: Vec<f64> = x[block].iter().zip(&self.centers[j]).map(|(a, c)| a - c).collect();
            v *= f.eval(&z);
            if v == 0.0 {
                return 0.0;
            }
        }
        for j in 0..d {
            v *= self.odes[j].value(self.t[j] * x[j]);
        }
        v
    }
    fn support(&self) -> Sphere {
        Sphere::centered(self.spec.dim(), self.support_radius())
    }
    fn kinks(&self) -> Vec<Kink> {
        let mut out = Vec::new();
        for (j, f) in self.factors.iter().enumerate() {
            let axes: Vec<usize> = self.spec.block(j).collect();
            for r in f.spheres() {
                out.push(Kink { axes: axes.clone(), center: self.centers[j].clone(), radius: r });
            }
        }
        out
    }
    fn axis_derivative(&self, x: &[f64], axis: usize, order: u32) -> Option<f64> {
        let d = self.spec.d();
        if axis >= d || norm(&x[..d]) >= 0.5 * self.rho {
            return None;
        }
        let mut v = 1.0;
        for (j, f) in self.factors.iter().enumerate() {
            let block = self.spec.block(j);
            let z: Vec<f64> = x[block].iter().zip(&self.centers[j]).map(|(a, c)| a - c).collect();
            v *= f.eval(&z);
        }
        for j in 0..d {
            let tx = self.t[j] * x[j];
            v *= if j == axis {
                self.t[j].powi(order as i32) * self.odes[j].derivative(tx, order)
            } else {
                self.odes[j].value(tx)
            };
        }
        Some(v)
    }
}

/// Sampling grids for the dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryPolicy {
    /// Local rate grid (each coordinate of t).
    pub t_grid: Vec<f64>,
    /// Outer radii for harmonic elements.
    pub outer_radii: Vec<f64>,
    /// Offset lengths rho_Y, Y_j = -rho_Y e_j / |e_j|.
    pub offsets: Vec<f64>,
    /// eps as multiples of r_j.
    pub eps_factors: Vec<f64>,
}

impl Default for DictionaryPolicy {
    fn default() -> Self {
        let t_grid = (0..7).map(|i| 0.25 * 8f64.powf(i as f64 / 6.0)).collect();
        DictionaryPolicy {
            t_grid,
            outer_radii: vec![1.5, 2.0, 3.0],
            offsets: vec![1.0, 1.5, 2.0],
            eps_factors: vec![0.3],
        }
    }
}

/// Unit directions used for an n-dimensional block: the 2n coordinate directions.
pub fn block_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for sg in [1.0, -1.0] {
            let mut v = vec![0.0; n];
            v[i] = sg;
            out.push(v);
        }
    }
    out
}

fn cartesian<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for l in lists {
        let mut next = Vec::with_capacity(out.len() * l.len());
        for prefix in &out {
            for item in l {
                let mut p = prefix.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Enumerates element parameters per the policy; rate vectors outside the
/// admissible set are skipped.
pub fn sample_dictionary(
    spec: &OperatorSpec,
    policy: &DictionaryPolicy,
    eigenpairs: &[Arc<EigenPair>],
) -> Result<Vec<ElementParams>, Error> {
    spec.validate()?;
    let nb = spec.nonlocal.len();
    // (unit direction, offset length, eps factor) per block
    let per_block: Vec<Vec<(Vec<f64>, f64, f64)>> = spec
        .nonlocal
        .iter()
        .map(|term| {
            let mut v = Vec::new();
            for u in block_directions(term.n as usize) {
                for &o in &policy.offsets {
                    for &f in &policy.eps_factors {
                        v.push((u.clone(), o, f));
                    }
                }
            }
            v
        })
        .collect();
    let geoms = cartesian(&per_block);
    let mut out = Vec::new();
    if spec.d() == 0 {
        let radii = cartesian(&vec![policy.outer_radii.clone(); nb]);
        for rs in &radii {
            for g in &geoms {
                let e: Vec<Vec<f64>> = g.iter().map(|(u, _, _)| u.clone()).collect();
                let y: Vec<Vec<f64>> = g.iter().map(|(u, o, f)| u.iter().map(|c| -o * f * c).collect()).collect();
                // eps is folded into the offsets so that each block may use its own factor.
                out.push(ElementParams::Harmonic { radii: rs.clone(), e, y, eps: 1.0 });
            }
        }
        return Ok(out);
    }
    if eigenpairs.len() != nb {
        return Err(Error::Domain("one eigenpair per nonlocal block".into()));
    }
    let stars: Vec<f64> = eigenpairs.iter().map(|p| p.lambda_star).collect();
    for t in cartesian(&vec![policy.t_grid.clone(); spec.d()]) {
        let Some(rates) = balance_rates(spec, &t, &stars)? else { continue };
        let radii: Vec<f64> =
            (0..nb).map(|j| (stars[j] / rates[j]).powf(1.0 / (2.0 * spec.nonlocal[j].s.get()))).collect();
        for g in &geoms {
            let e: Vec<Vec<f64>> =
                g.iter().zip(&radii).map(|((u, _, _), r)| u.iter().map(|c| r * c).collect()).collect();
            let y: Vec<Vec<f64>> =
                g.iter().zip(&radii).map(|((u, o, f), r)| u.iter().map(|c| -o * f * r * c).collect()).collect();
            out.push(ElementParams::Eigen { t: t.clone(), e, y, eps: 1.0 });
        }
    }
    Ok(out)
}

/// Rows are elements, columns the derivatives d^iota w(0), |iota| <= K.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeMatrix {
    pub order: usize,
    pub nvars: usize,
    pub indices: Vec<Vec<u32>>,
    pub rows: Vec<Vec<f64>>,
    /// Singular values of the raw matrix, descending.
    pub singular_values: Vec<f64>,
    /// Singular values after column equilibration, descending.
    pub scaled_singular_values: Vec<f64>,
}

impl DerivativeMatrix {
    pub fn columns(&self) -> usize {
        self.indices.len()
    }

    /// sigma_min / sigma_max of the raw matrix (0 with fewer rows than columns).
    pub fn rank_ratio(&self) -> f64 {
        ratio(&self.singular_values, self.columns())
    }

    pub fn scaled_rank_ratio(&self) -> f64 {
        ratio(&self.scaled_singular_values, self.columns())
    }

    /// Number of singular values at least `rel` times the largest.
    pub fn numerical_rank(&self, rel: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&v| v > 0.0 && v >= rel * top).count()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.columns(), |i, j| self.rows[i][j])
    }
}

fn ratio(sv: &[f64], cols: usize) -> f64 {
    if sv.len() < cols || sv.is_empty() || sv[0] == 0.0 {
        return 0.0;
    }
    sv[cols - 1] / sv[0]
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn column_scales(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| {
            let c = m.column(j).norm();
            if c > 0.0 {
                1.0 / c
            } else {
                1.0
            }
        })
        .collect()
}

pub fn assemble_matrix(elements: &[DictionaryElement], k: usize) -> Result<DerivativeMatrix, Error> {
    let nvars = match elements.first() {
        Some(e) => e.spec.dim(),
        None => return Err(Error::Domain("empty dictionary".into())),
    };
    if elements.iter().any(|e| e.spec.dim() != nvars) {
        return Err(Error::Domain("elements live in different dimensions".into()));
    }
    let set = MultiIndexSet::get(nvars, k);
    let rows = crate::par::map(elements, |e| e.origin_derivatives(k));
    let mut dm = DerivativeMatrix {
        order: k,
        nvars,
        indices: set.indices.clone(),
        rows,
        singular_values: Vec::new(),
        scaled_singular_values: Vec::new(),
    };
    let m = dm.matrix();
    dm.singular_values = sorted_singular_values(&m);
    let cs = column_scales(&m);
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * cs[j]);
    dm.scaled_singular_values = sorted_singular_values(&scaled);
    Ok(dm)
}

/// Minimal-norm c with sum_i c_i rows_i = target.
pub fn span_solve(matrix: &DerivativeMatrix, target: &[f64]) -> Result<Vec<f64>, Error> {
    let kp = matrix.columns();
    if target.len() != kp {
        return Err(Error::Domain(format!("target has {} entries, expected {kp}", target.len())));
    }
    let ne = matrix.rows.len();
    let tn = norm(target);
    if tn == 0.0 {
        return Ok(vec![0.0; ne]);
    }
    let m = matrix.matrix();
    let cs = column_scales(&m);
    // Equations (one per derivative) scaled by cs; unknowns scaled by row norms.
    let rs: Vec<f64> = (0..ne)
        .map(|i| {
            let r: f64 = (0..kp).map(|j| (m[(i, j)] * cs[j]).powi(2)).sum::<f64>().sqrt();
            if r > 0.0 {
                1.0 / r
            } else {
                1.0
            }
        })
        .collect();
    // Tall system sys^T = U S V^T, so sys = V S U^T and c' = U S^+ V^T rhs.
    let tall = DMatrix::from_fn(ne, kp, |i, j| m[(i, j)] * cs[j] * rs[i]);
    let rhs = DVector::from_iterator(kp, target.iter().zip(&cs).map(|(t, c)| t * c));
    let svd = tall.svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    let mut sol = DVector::<f64>::zeros(ne);
    for (l, &sl) in svd.singular_values.iter().enumerate() {
        if sl > 1e-10 * smax {
            let coef = vt.row(l).transpose().dot(&rhs) / sl;
            sol += u.column(l) * coef;
        }
    }
    let c: Vec<f64> = sol.iter().zip(&rs).map(|(v, r)| v * r).collect();
    let achieved: Vec<f64> = (0..kp).map(|j| (0..ne).map(|i| c[i] * m[(i, j)]).sum()).collect();
    let res = norm(&achieved.iter().zip(target).map(|(a, t)| a - t).collect::<Vec<_>>()) / tn;
    if !(res <= 1e-8) {
        return Err(Error::RankDeficient { residual: res });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{principal_eigenpair, EigenConfig};
    use crate::FracOrder;

    #[test]
    fn ode_examples() {
        let o = ode_solve(1, 1.0, 6).unwrap();
        for x in [0.0, 0.7, -1.3] {
            assert!((o.value(x) - (-x).exp()).abs() < 1e-14);
        }
        assert_eq!(o.table, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        let o = ode_solve(2, 1.0, 5).unwrap();
        assert!((o.value(0.4) - (0.4f64.cos() + 0.4f64.sin())).abs() < 1e-14);
        assert_eq!(o.table, vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn ode_table_matches_closed_form() {
        for m in 1..=4 {
            for ab in [1.0, -1.0] {
                let o = ode_solve(m, ab, 12).unwrap();
                for (i, &w) in o.table.iter().enumerate() {
                    assert!((o.derivative(0.0, i as u32) - w).abs() < 1e-10, "m={m} i={i}");
                }
            }
        }
    }

    #[test]
    fn caloric_balance() {
        let spec = OperatorSpec::caloric(0.5, 1).unwrap();
        let r = balance_rates(&spec, &[0.7], &[1.2]).unwrap().unwrap();
        assert!((r[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn harmonic_factor_jet_matches_eval() {
        let f = BlockFactor::Harmonic { s: 0.5, outer: 2.0 };
        let set = MultiIndexSet::get(1, 2);
        let z0 = 0.6;
        let j = f.jet(&[Jet::variable(&set, 0, z0)]).unwrap();
        let h = 1e-4;
        let d = j.derivatives();
        assert!((d[0] - f.eval(&[z0])).abs() < 1e-14);
        assert!((d[1] - (f.eval(&[z0 + h]) - f.eval(&[z0 - h])) / (2.0 * h)).abs() < 1e-7);
    }

    #[test]
    fn element_jet_matches_eval() {
        let p = Arc::new(principal_eigenpair(1, FracOrder::new(0.5).unwrap(), &EigenConfig::default()).unwrap());
        let spec = OperatorSpec::caloric(0.5, 1).unwrap();
        let t = 0.8;
        let r = p.lambda_star / t;
        let params = ElementParams::Eigen { t: vec![t], e: vec![vec![r]], y: vec![vec![-0.3 * r]], eps: 1.0 };
        let el = build_element(&spec, &params, &[p]).unwrap();
        let x = [0.05, -0.1];
        let j = el.jet_at(&x, 1).unwrap();
        assert!((j.value() - el.eval(&x)).abs() < 1e-14);
        let h = 1e-5;
        let dt = (el.eval(&[x[0] + h, x[1]]) - el.eval(&[x[0] - h, x[1]])) / (2.0 * h);
        let set = MultiIndexSet::get(2, 1);
        assert!((j.derivatives()[set.position(&[1, 0]).unwrap()] - dt).abs() < 1e-8);
        assert!((el.axis_derivative(&x, 0, 1).unwrap() - dt).abs() < 1e-8);
    }
}
