//! Dirichlet problem (-Delta)^s u = f in B_1, u = 0 outside, solved through
//! the Green representation u(x) = kappa(n,s) int f(z) G(x,z) dz.

use std::sync::Arc;

use crate::constants::{Constants, FracOrder};
use crate::field::{dot, norm, Kink, ScalarField, Sphere};
use crate::green::{GoaRow, GreenKernel, LimitTable};
use crate::quad::{QuadConfig, QuadResult};
use crate::Error;

#[derive(Clone)]
pub struct DirichletSolution {
    pub n: u32,
    pub s: FracOrder,
    pub rhs: Arc<dyn ScalarField>,
    pub kernel: GreenKernel,
    pub quad: QuadConfig,
    kappa: f64,
}

pub fn solve(n: u32, s: FracOrder, f: Arc<dyn ScalarField>, quad: QuadConfig) -> Result<DirichletSolution, Error> {
    if f.dim() != n as usize {
        return Err(Error::Domain(format!("datum on R^{} for a problem on R^{n}", f.dim())));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::Unsupported(format!("dimension {n}")));
    }
    Ok(DirichletSolution {
        n,
        s,
        rhs: f,
        kernel: GreenKernel::new(n, s),
        quad,
        kappa: Constants::get(n, s)?.kappa_green,
    })
}

impl DirichletSolution {
    /// u(x) with the quadrature record; exactly 0 for |x| >= 1.
    pub fn value(&self, x: &[f64]) -> Result<QuadResult, Error> {
        if norm(x) >= 1.0 {
            return Ok(QuadResult::default());
        }
        Ok(self.kernel.integrate_against(self.rhs.as_ref(), x, &self.quad)?.scale(self.kappa))
    }

    pub fn values(&self, xs: &[Vec<f64>]) -> Result<Vec<QuadResult>, Error> {
        crate::par::map(xs, |x| self.value(x)).into_iter().collect()
    }

    /// Rows (eps, eps^{-s} u(e + eps omega), kappa * boundary functional, ratio).
    pub fn boundary_limit(&self, e: &[f64], omega: &[f64], eps: &[f64]) -> Result<LimitTable, Error> {
        let eo = dot(e, omega);
        if !(eo < 0.0) {
            return Err(Error::NotInward(eo));
        }
        let rhs = self.kernel.boundary_functional(self.rhs.as_ref(), e, omega, &self.quad)?.scale(self.kappa);
        let mut table = LimitTable { budget_exceeded: rhs.exceeded, ..LimitTable::default() };
        let s = self.s.get();
        let pts: Vec<Vec<f64>> = eps.iter().map(|&ep| e.iter().zip(omega).map(|(a, b)| a + ep * b).collect()).collect();
        let vals = self.values(&pts)?;
        if rhs.value == 0.0 {
            table.undefined = true;
        }
        for (&ep, q) in eps.iter().zip(vals) {
            table.budget_exceeded |= q.exceeded;
            let lhs = ep.powf(-s) * q.value;
            let ratio = if table.undefined { f64::NAN } else { lhs / rhs.value };
            table.rows.push(GoaRow { eps: ep, lhs, rhs: rhs.value, ratio });
        }
        Ok(table)
    }
}

impl ScalarField for DirichletSolution {
    fn dim(&self) -> usize {
        self.n as usize
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x).map(|q| q.value).unwrap_or(0.0)
    }
    fn support(&self) -> Sphere {
        Sphere::centered(self.n as usize, 1.0)
    }
    fn kinks(&self) -> Vec<Kink> {
        let mut k = vec![Kink::sphere(vec![0.0; self.n as usize], 1.0)];
        k.extend(self.rhs.kinks());
        k
    }
}
