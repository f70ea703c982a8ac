//! Lambda-harmonic approximation of monomials, polynomials and general targets
//! by rescaled combinations of dictionary elements.
//!
//! For a target multi-index iota the combination w has d^iota w(0) = 1 and all
//! other derivatives of order <= K equal to zero; then
//! u(y) = eta^{-gamma} w(eta^{e_1} y_1, ..., eta^{e_nu} y_nu)
//! with e = 1/m_j on local and 1/(2 s_j) on nonlocal coordinates is
//! Lambda-harmonic on a ball growing like eta^{-mu} and approaches y^iota/iota!.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::{principal_eigenpair, EigenConfig, EigenPair};
use crate::field::{norm, Kink, ScalarField, Sphere};
use crate::fracop::{lambda_residual_at, OperatorSpec};
use crate::jet::MultiIndexSet;
use crate::quad::QuadConfig;
use crate::spanner::{
    assemble_matrix, build_element, sample_dictionary, span_solve, DictionaryElement, DictionaryPolicy, ElementParams,
};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationPlan {
    pub iota: Vec<u32>,
    pub gamma: f64,
    pub mu: f64,
    pub k_o: usize,
    /// Derivative order of the span problem, K_o + |iota| + k.
    pub order: usize,
    pub eta: f64,
}

/// Scaling exponent of each variable: 1/m_j on local, 1/(2 s_j) on nonlocal coordinates.
pub fn exponents(spec: &OperatorSpec) -> Vec<f64> {
    let mut e: Vec<f64> = spec.local.iter().map(|t| 1.0 / t.m as f64).collect();
    for t in &spec.nonlocal {
        e.extend(std::iter::repeat_n(1.0 / (2.0 * t.s.get()), t.n as usize));
    }
    e
}

pub fn plan(spec: &OperatorSpec, iota: &[u32], k: usize) -> Result<ApproximationPlan, Error> {
    let e = exponents(spec);
    if iota.len() != e.len() {
        return Err(Error::Domain(format!("multi-index has {} entries, expected {}", iota.len(), e.len())));
    }
    let gamma: f64 = iota.iter().zip(&e).map(|(&i, x)| i as f64 * x).sum();
    let mu = e.iter().copied().fold(f64::INFINITY, f64::min);
    let k_o = ((gamma + 1.0) / mu - 1e-12).ceil().max(0.0) as usize;
    let total: u32 = iota.iter().sum();
    Ok(ApproximationPlan { iota: iota.to_vec(), gamma, mu, k_o, order: k_o + total as usize + k, eta: 1.0 })
}

/// Where the C^k error is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDomain {
    /// Unit ball in all variables.
    Ball,
    /// The cube [-1, 1]^nu.
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxOptions {
    /// Grid points per axis for the error measurement.
    pub grid_points: usize,
    pub eta_start: f64,
    pub eta_min: f64,
    /// Stop the eta search after this many consecutive error increases.
    pub stagnation: usize,
    pub domain: ErrorDomain,
    /// Points at which the Lambda residual is sampled.
    pub residual_points: usize,
    /// Maximal total degree of the polynomial fit.
    pub degree_budget: usize,
    pub quad: QuadConfig,
    pub eigen: EigenConfig,
    pub policy: DictionaryPolicy,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            grid_points: 17,
            eta_start: 0.25,
            eta_min: 1e-8,
            stagnation: 4,
            domain: ErrorDomain::Ball,
            residual_points: 5,
            degree_budget: 10,
            quad: QuadConfig::default(),
            eigen: EigenConfig::default(),
            policy: DictionaryPolicy::default(),
        }
    }
}

/// One rescaled combination weight * eta^{-gamma} sum_i c_i w_i(S_eta y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub weight: f64,
    pub plan: ApproximationPlan,
    pub coefficients: Vec<f64>,
}

/// Evaluator of a sum of rescaled dictionary combinations.
#[derive(Clone, Debug)]
pub struct ApproxField {
    pub spec: OperatorSpec,
    pub elements: Arc<Vec<DictionaryElement>>,
    pub terms: Vec<MonomialTerm>,
    expo: Vec<f64>,
}

impl ApproxField {
    pub fn new(spec: OperatorSpec, elements: Arc<Vec<DictionaryElement>>, terms: Vec<MonomialTerm>) -> Self {
        let expo = exponents(&spec);
        ApproxField { spec, elements, terms, expo }
    }

    fn scaled(&self, eta: f64, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.expo).map(|(v, e)| v * eta.powf(*e)).collect()
    }

    /// All derivatives of order <= k at y, graded-lex order.
    pub fn derivatives(&self, y: &[f64], k: usize) -> Result<Vec<f64>, Error> {
        let set = MultiIndexSet::get(self.spec.dim(), k);
        let mut out = vec![0.0; set.len()];
        for term in &self.terms {
            let eta = term.plan.eta;
            let z = self.scaled(eta, y);
            let pre = term.weight * eta.powf(-term.plan.gamma);
            let factors: Vec<f64> = set
                .indices
                .iter()
                .map(|b| pre * b.iter().zip(&self.expo).map(|(&bi, e)| eta.powf(bi as f64 * e)).product::<f64>())
                .collect();
            for (el, &c) in self.elements.iter().zip(&term.coefficients) {
                if c == 0.0 {
                    continue;
                }
                if k == 0 {
                    out[0] += factors[0] * c * el.eval(&z);
                    continue;
                }
                let d = el.jet_at(&z, k).ok_or_else(|| Error::OutsideSmoothRegion(y.to_vec()))?.derivatives();
                for ((o, f), v) in out.iter_mut().zip(&factors).zip(d) {
                    *o += f * c * v;
                }
            }
        }
        Ok(out)
    }
}

impl ScalarField for ApproxField {
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let mut v = 0.0;
        for term in &self.terms {
            let z = self.scaled(term.plan.eta, y);
            let inner: f64 = self
                .elements
                .iter()
                .zip(&term.coefficients)
                .filter(|(_, &c)| c != 0.0)
                .map(|(el, &c)| c * el.eval(&z))
                .sum();
            v += term.weight * term.plan.eta.powf(-term.plan.gamma) * inner;
        }
        v
    }
    fn support(&self) -> Sphere {
        let emax = self.expo.iter().copied().fold(0.0, f64::max);
        let r = self
            .terms
            .iter()
            .flat_map(|t| self.elements.iter().map(move |el| el.support().radius / t.plan.eta.powf(emax)))
            .fold(0.0, f64::max);
        Sphere::centered(self.dim(), r)
    }
    fn kinks(&self) -> Vec<Kink> {
        let mut out = Vec::new();
        for t in &self.terms {
            for (el, &c) in self.elements.iter().zip(&t.coefficients) {
                if c == 0.0 {
                    continue;
                }
                for k in el.kinks() {
                    let sc = t.plan.eta.powf(self.expo[k.axes[0]]);
                    out.push(Kink {
                        axes: k.axes.clone(),
                        center: k.center.iter().map(|c| c / sc).collect(),
                        radius: k.radius / sc,
                    });
                }
            }
        }
        out
    }
    fn axis_derivative(&self, y: &[f64], axis: usize, order: u32) -> Option<f64> {
        if axis >= self.spec.d() {
            return None;
        }
        let mut v = 0.0;
        for term in &self.terms {
            let eta = term.plan.eta;
            let z = self.scaled(eta, y);
            let pre = term.weight * eta.powf(-term.plan.gamma + order as f64 * self.expo[axis]);
            for (el, &c) in self.elements.iter().zip(&term.coefficients) {
                if c != 0.0 {
                    v += pre * c * el.axis_derivative(&z, axis, order)?;
                }
            }
        }
        Some(v)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproximationResult {
    pub spec: OperatorSpec,
    pub k: usize,
    pub options: ApproxOptions,
    pub elements: Vec<ElementParams>,
    pub terms: Vec<MonomialTerm>,
    /// max over the grid of |d^beta (u - f)|, |beta| <= k.
    pub achieved_ck_error: f64,
    /// max |Lambda u| over the sampled points of the region.
    pub lambda_residual: f64,
    /// Lambda u = 0 on the ball of this radius around the origin.
    pub region_radius: f64,
    pub support_radius: f64,
    /// (eta, error) along the eta search of a single monomial.
    pub history: Vec<(f64, f64)>,
    /// Error of the polynomial fit of a general target.
    pub fit_error: f64,
    #[serde(skip)]
    field: OnceLock<Arc<ApproxField>>,
}

impl ApproximationResult {
    /// The evaluator; rebuilt from the stored parameters after deserialization.
    pub fn evaluator(&self) -> Result<Arc<ApproxField>, Error> {
        if let Some(f) = self.field.get() {
            return Ok(f.clone());
        }
        let pairs = eigenpairs_for(&self.spec, &self.options.eigen)?;
        let elements =
            self.elements.iter().map(|p| build_element(&self.spec, p, &pairs)).collect::<Result<Vec<_>, _>>()?;
        let f = Arc::new(ApproxField::new(self.spec.clone(), Arc::new(elements), self.terms.clone()));
        Ok(self.field.get_or_init(|| f).clone())
    }
}

/// Principal eigenpairs of every nonlocal block (none for purely nonlocal specs).
pub fn eigenpairs_for(spec: &OperatorSpec, cfg: &EigenConfig) -> Result<Vec<Arc<EigenPair>>, Error> {
    if spec.d() == 0 {
        return Ok(Vec::new());
    }
    spec.nonlocal.iter().map(|t| principal_eigenpair(t.n, t.s, cfg).map(Arc::new)).collect()
}

/// The dictionary shared by all monomial stages.
pub struct Dictionary {
    pub params: Vec<ElementParams>,
    pub elements: Arc<Vec<DictionaryElement>>,
}

pub fn build_dictionary(
    spec: &OperatorSpec,
    policy: &DictionaryPolicy,
    eigenpairs: &[Arc<EigenPair>],
) -> Result<Dictionary, Error> {
    let params = sample_dictionary(spec, policy, eigenpairs)?;
    let elements =
        crate::par::map(&params, |p| build_element(spec, p, eigenpairs)).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Dictionary { params, elements: Arc::new(elements) })
}

/// Evaluation grid of the error domain.
pub fn error_grid(nvars: usize, points: usize, domain: ErrorDomain) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..points).map(|i| -1.0 + 2.0 * i as f64 / (points - 1).max(1) as f64).collect();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..nvars {
        out = out.into_iter().flat_map(|p| axis.iter().map(move |&a| [p.clone(), vec![a]].concat())).collect();
    }
    if domain == ErrorDomain::Ball {
        out.retain(|p| norm(p) <= 1.0 + 1e-12);
    }
    out
}

/// Sum of weight * y^iota / iota! with all derivatives of order <= k.
fn polynomial_derivatives(terms: &[(f64, Vec<u32>)], y: &[f64], k: usize) -> Vec<f64> {
    let set = MultiIndexSet::get(y.len(), k);
    set.indices
        .iter()
        .map(|b| {
            terms
                .iter()
                .map(|(w, iota)| {
                    let mut v = *w;
                    for ((&i, &bi), &yi) in iota.iter().zip(b).zip(y) {
                        if bi > i {
                            return 0.0;
                        }
                        let p = i - bi;
                        v *= yi.powi(p as i32) / crate::jet::factorial(p as usize);
                    }
                    v
                })
                .sum()
        })
        .collect()
}

fn ck_error(
    field: &ApproxField,
    target: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    grid: &[Vec<f64>],
    k: usize,
) -> Result<f64, Error> {
    let errs = crate::par::map(grid, |y| -> Result<f64, Error> {
        let u = field.derivatives(y, k)?;
        let f = target(y);
        Ok(u.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    });
    errs.into_iter().try_fold(0.0f64, |m, e| e.map(|v| m.max(v)))
}

fn region_radius(field: &ApproxField) -> f64 {
    let e = &field.expo;
    let mu = e.iter().copied().fold(f64::INFINITY, f64::min);
    let mut r = f64::INFINITY;
    for t in &field.terms {
        for (el, &c) in field.elements.iter().zip(&t.coefficients) {
            if c != 0.0 {
                r = r.min(el.neighborhood / t.plan.eta.powf(mu));
            }
        }
    }
    r
}

/// Samples of Lambda u at the origin, along the coordinate axes inside the
/// error domain, and halfway to the edge of the guaranteed region.
fn residual_points(nvars: usize, count: usize, region: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; nvars]];
    let inner = region.min(1.0) * 0.9;
    let mut i = 0;
    while pts.len() < count {
        let axis = i % nvars;
        let sign = if (i / nvars).is_multiple_of(2) { 1.0 } else { -1.0 };
        let r = if (i / (2 * nvars)).is_multiple_of(2) { inner } else { 0.5 * region };
        let mut p = vec![0.0; nvars];
        p[axis] = sign * r * 0.93;
        pts.push(p);
        i += 1;
    }
    pts
}

/// (point, Lambda u) at the residual sample points of the guaranteed region.
pub fn sample_residuals(
    field: &ApproxField,
    count: usize,
    region: f64,
    quad: &QuadConfig,
) -> Result<Vec<(Vec<f64>, f64)>, Error> {
    let pts = residual_points(field.dim(), count, region);
    let vals = crate::par::map(&pts, |p| lambda_residual_at(&field.spec, field, p, quad));
    pts.into_iter().zip(vals).map(|(p, v)| v.map(|r| (p, r.value))).collect()
}

fn measure_residual(field: &ApproxField, count: usize, region: f64, quad: &QuadConfig) -> Result<f64, Error> {
    Ok(sample_residuals(field, count, region, quad)?.iter().fold(0.0, |m, (_, v)| m.max(v.abs())))
}

/// Dictionary coefficients of the one-hot combination for iota at order K.
fn one_hot_coefficients(dict: &Dictionary, plan: &ApproximationPlan) -> Result<Vec<f64>, Error> {
    let matrix = assemble_matrix(&dict.elements, plan.order)?;
    let set = MultiIndexSet::get(matrix.nvars, plan.order);
    let mut target = vec![0.0; set.len()];
    target[set.position(&plan.iota).expect("iota is within the order")] = 1.0;
    span_solve(&matrix, &target)
}

/// C^k errors of the rescaled one-hot combination at the given eta values.
pub fn monomial_error_curve(
    spec: &OperatorSpec,
    iota: &[u32],
    k: usize,
    etas: &[f64],
    dict: &Dictionary,
    options: &ApproxOptions,
) -> Result<Vec<(f64, f64)>, Error> {
    let base = plan(spec, iota, k)?;
    let coefficients = one_hot_coefficients(dict, &base)?;
    let grid = error_grid(spec.dim(), options.grid_points, options.domain);
    let target_terms = vec![(1.0, iota.to_vec())];
    let target = move |y: &[f64]| polynomial_derivatives(&target_terms, y, k);
    etas.iter()
        .map(|&eta| {
            let term = MonomialTerm {
                weight: 1.0,
                plan: ApproximationPlan { eta, ..base.clone() },
                coefficients: coefficients.clone(),
            };
            let field = ApproxField::new(spec.clone(), dict.elements.clone(), vec![term]);
            ck_error(&field, &target, &grid, k).map(|e| (eta, e))
        })
        .collect()
}

/// Rescaled combination approximating y^iota / iota! to C^k error `eps`.
pub fn approximate_monomial(
    spec: &OperatorSpec,
    iota: &[u32],
    k: usize,
    eps: f64,
    eigenpairs: &[Arc<EigenPair>],
    options: &ApproxOptions,
) -> Result<ApproximationResult, Error> {
    let dict = build_dictionary(spec, &options.policy, eigenpairs)?;
    approximate_polynomial_with(spec, &[(1.0, iota.to_vec())], k, eps, &dict, options)
}

/// Polynomial target sum_j c_j y^{iota_j}, each monomial approximated with
/// budget eps / (J max(1, c)) where c bounds the weights on y^iota / iota!.
pub fn approximate_polynomial(
    spec: &OperatorSpec,
    coefficients: &[(f64, Vec<u32>)],
    k: usize,
    eps: f64,
    eigenpairs: &[Arc<EigenPair>],
    options: &ApproxOptions,
) -> Result<ApproximationResult, Error> {
    let dict = build_dictionary(spec, &options.policy, eigenpairs)?;
    let weights: Vec<(f64, Vec<u32>)> =
        coefficients.iter().map(|(c, iota)| (c * MultiIndexSet::factorial(iota), iota.clone())).collect();
    approximate_polynomial_with(spec, &weights, k, eps, &dict, options)
}

/// Same as `approximate_polynomial` with weights on y^iota / iota! and a prebuilt dictionary.
pub fn approximate_polynomial_with(
    spec: &OperatorSpec,
    weights: &[(f64, Vec<u32>)],
    k: usize,
    eps: f64,
    dict: &Dictionary,
    options: &ApproxOptions,
) -> Result<ApproximationResult, Error> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps = {eps}")));
    }
    let weights: Vec<(f64, Vec<u32>)> = weights.iter().filter(|(w, _)| *w != 0.0).cloned().collect();
    if weights.len() > 50 {
        return Err(Error::Unsupported(format!("{} monomials, at most 50 supported", weights.len())));
    }
    let nu = spec.dim();
    let grid = error_grid(nu, options.grid_points, options.domain);
    let mut result = ApproximationResult {
        spec: spec.clone(),
        k,
        options: options.clone(),
        elements: dict.params.clone(),
        terms: Vec::new(),
        achieved_ck_error: 0.0,
        lambda_residual: 0.0,
        region_radius: f64::INFINITY,
        support_radius: 0.0,
        history: Vec::new(),
        fit_error: 0.0,
        field: OnceLock::new(),
    };
    if weights.is_empty() {
        let f = Arc::new(ApproxField::new(spec.clone(), dict.elements.clone(), Vec::new()));
        let _ = result.field.set(f);
        return Ok(result);
    }
    let j = weights.len() as f64;
    let c = weights.iter().map(|(w, _)| w.abs()).fold(0.0, f64::max);
    let budget = eps / (j * c.max(1.0));
    let stages = crate::par::map(&weights, |(w, iota)| -> Result<(MonomialTerm, Vec<(f64, f64)>), Error> {
        let base = plan(spec, iota, k)?;
        let coefficients = one_hot_coefficients(dict, &base)?;
        let terms = vec![(1.0, iota.clone())];
        let target = |y: &[f64]| polynomial_derivatives(&terms, y, k);
        let mut history = Vec::new();
        let mut eta = options.eta_start;
        let mut best = (f64::INFINITY, eta);
        let mut rising = 0;
        while eta >= options.eta_min {
            let term = MonomialTerm {
                weight: 1.0,
                plan: ApproximationPlan { eta, ..base.clone() },
                coefficients: coefficients.clone(),
            };
            let field = ApproxField::new(spec.clone(), dict.elements.clone(), vec![term.clone()]);
            let err = ck_error(&field, &target, &grid, k)?;
            if let Some(&(_, last)) = history.last() {
                rising = if err > last { rising + 1 } else { 0 };
            }
            history.push((eta, err));
            if err < best.0 {
                best = (err, eta);
            }
            if err <= budget {
                return Ok((MonomialTerm { weight: *w, ..term }, history));
            }
            if rising >= options.stagnation {
                break;
            }
            eta *= 0.5;
        }
        Err(Error::EtaUnderflow { target: budget, best: best.0, eta: best.1 })
    });
    for s in stages {
        let (term, history) = s?;
        if weights.len() == 1 {
            result.history = history;
        }
        result.terms.push(term);
    }
    let field = Arc::new(ApproxField::new(spec.clone(), dict.elements.clone(), result.terms.clone()));
    let target = |y: &[f64]| polynomial_derivatives(&weights, y, k);
    result.achieved_ck_error = ck_error(&field, &target, &grid, k)?;
    result.region_radius = region_radius(&field);
    result.support_radius = field.support().radius;
    result.lambda_residual = measure_residual(&field, options.residual_points, result.region_radius, &options.quad)?;
    let _ = result.field.set(field);
    Ok(result)
}

/// Least-squares polynomial fit of `f` with C^k error at most `budget` on the
/// grid; returns weights on y^iota / iota! and the achieved error.
pub fn fit_polynomial(
    f: &(impl ScalarField + ?Sized),
    k: usize,
    budget: f64,
    grid: &[Vec<f64>],
    degree_budget: usize,
) -> Result<(Vec<(f64, Vec<u32>)>, f64), Error> {
    let nu = f.dim();
    let dset = MultiIndexSet::get(nu, k);
    // Derivative samples of f: exact values for beta = 0, central differences otherwise.
    let h = 1e-3;
    let samples: Vec<Vec<f64>> = crate::par::map(grid, |y| {
        dset.indices
            .iter()
            .map(|b| {
                let order: u32 = b.iter().sum();
                if order == 0 {
                    return f.eval(y);
                }
                mixed_difference(f, y, b, h)
            })
            .collect()
    });
    let scale = samples.iter().flat_map(|s| s.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut best = f64::INFINITY;
    for degree in 0..=degree_budget {
        let basis = MultiIndexSet::get(nu, degree);
        let nb = basis.len();
        let rows = grid.len() * dset.len();
        let a = DMatrix::from_fn(rows, nb, |r, c| {
            let (p, b) = (r / dset.len(), r % dset.len());
            polynomial_derivatives(&[(1.0, basis.indices[c].clone())], &grid[p], k)[b]
        });
        let rhs = DVector::from_iterator(rows, samples.iter().flat_map(|s| s.iter().copied()));
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let sol = svd.solve(&rhs, 1e-13 * smax).map_err(|e| Error::Domain(e.to_string()))?;
        let mut weights: Vec<(f64, Vec<u32>)> = sol
            .iter()
            .zip(&basis.indices)
            .filter(|(w, _)| w.abs() > 1e-11 * scale)
            .map(|(w, i)| (*w, i.clone()))
            .collect();
        let eval_err = |ws: &[(f64, Vec<u32>)]| -> f64 {
            grid.iter()
                .zip(&samples)
                .map(|(y, s)| {
                    polynomial_derivatives(ws, y, k).iter().zip(s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        let err = eval_err(&weights);
        best = best.min(err);
        if err <= budget {
            weights.sort_by(|a, b| a.1.cmp(&b.1));
            return Ok((weights, err));
        }
    }
    Err(Error::FitBudget { achieved: best, budget, degree: degree_budget })
}

fn mixed_difference(f: &(impl ScalarField + ?Sized), y: &[f64], beta: &[u32], h: f64) -> f64 {
    // Differentiate one axis at a time through nested central differences.
    fn rec(f: &(impl ScalarField + ?Sized), y: &mut Vec<f64>, beta: &[u32], axis: usize, h: f64) -> f64 {
        if axis == beta.len() {
            return f.eval(y);
        }
        if beta[axis] == 0 {
            return rec(f, y, beta, axis + 1, h);
        }
        let m = beta[axis] as usize;
        let p = (m as i32 - 1) / 2 + 2;
        let offsets: Vec<f64> = (-p..=p).map(|k| k as f64).collect();
        let w = crate::fracop::fornberg_weights(m, &offsets);
        let y0 = y[axis];
        let mut acc = 0.0;
        for (o, wk) in offsets.iter().zip(&w) {
            y[axis] = y0 + o * h;
            acc += wk * rec(f, y, beta, axis + 1, h);
        }
        y[axis] = y0;
        acc / h.powi(m as i32)
    }
    rec(f, &mut y.to_vec(), beta, 0, h)
}

/// Approximates a general target: polynomial fit within eps/2, then the
/// polynomial within eps/2.
pub fn approximate_function(
    spec: &OperatorSpec,
    f: &(impl ScalarField + ?Sized),
    k: usize,
    eps: f64,
    eigenpairs: &[Arc<EigenPair>],
    options: &ApproxOptions,
) -> Result<ApproximationResult, Error> {
    if f.dim() != spec.dim() {
        return Err(Error::Domain("target and operator dimensions differ".into()));
    }
    let grid = error_grid(spec.dim(), options.grid_points, options.domain);
    let (weights, fit_error) = fit_polynomial(f, k, 0.5 * eps, &grid, options.degree_budget)?;
    let dict = build_dictionary(spec, &options.policy, eigenpairs)?;
    let mut result = approximate_polynomial_with(spec, &weights, k, 0.5 * eps, &dict, options)?;
    result.fit_error = fit_error;
    // Error against f itself, not only against the fitted polynomial.
    let field = result.evaluator()?;
    let dset = MultiIndexSet::get(spec.dim(), k);
    let errs = crate::par::map(&grid, |y| -> Result<f64, Error> {
        let u = field.derivatives(y, k)?;
        Ok(dset
            .indices
            .iter()
            .zip(&u)
            .map(|(b, uv)| {
                let fv = if b.iter().all(|&v| v == 0) { f.eval(y) } else { mixed_difference(f, y, b, 1e-3) };
                (uv - fv).abs()
            })
            .fold(0.0, f64::max))
    });
    result.achieved_ck_error = errs.into_iter().try_fold(0.0f64, |m, e| e.map(|v: f64| m.max(v)))?;
    Ok(result)
}

/// d_t u + (-Delta)^s u = 0 approximation of f(t, x) on the box [-1, 1]^{1+n}.
pub fn approximate_caloric(
    f: &(impl ScalarField + ?Sized),
    s: f64,
    k: usize,
    eps: f64,
    options: &ApproxOptions,
) -> Result<ApproximationResult, Error> {
    let n = f.dim().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| Error::Domain("need variables (t, x)".into()))?;
    let spec = OperatorSpec::caloric(s, n as u32)?;
    let pairs = eigenpairs_for(&spec, &options.eigen)?;
    let options = ApproxOptions { domain: ErrorDomain::Box, ..options.clone() };
    approximate_function(&spec, f, k, eps, &pairs, &options)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogisticReport {
    pub result: ApproximationResult,
    /// sup |sigma - sigma_eps| in C^k on the box.
    pub sigma_error: f64,
    pub min_u: f64,
    pub positive: bool,
    /// max |d_t u + (-Delta)^s u| at the sampled points.
    pub caloric_residual: f64,
    /// max |d_t u + (-Delta)^s u - (sigma_eps - u) u| at the same points.
    pub logistic_residual: f64,
}

/// u_eps approximating sigma by a caloric function, and sigma_eps := u_eps.
pub fn logistic_resource(
    sigma: &(impl ScalarField + ?Sized),
    s: f64,
    k: usize,
    eps: f64,
    options: &ApproxOptions,
) -> Result<LogisticReport, Error> {
    let result = approximate_caloric(sigma, s, k, eps, options)?;
    let u = result.evaluator()?;
    let grid = error_grid(u.dim(), options.grid_points, ErrorDomain::Box);
    let min_u = grid.iter().map(|y| u.eval(y)).fold(f64::INFINITY, f64::min);
    let pts = residual_points(u.dim(), options.residual_points, result.region_radius);
    let mut caloric: f64 = 0.0;
    let mut logistic: f64 = 0.0;
    for p in &pts {
        let r = lambda_residual_at(&u.spec, u.as_ref(), p, &options.quad)?.value;
        let uv = u.eval(p);
        let sigma_eps = uv;
        caloric = caloric.max(r.abs());
        logistic = logistic.max((r - (sigma_eps - uv) * uv).abs());
    }
    Ok(LogisticReport {
        sigma_error: result.achieved_ck_error,
        min_u,
        positive: min_u > 0.0,
        caloric_residual: caloric,
        logistic_residual: logistic,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_arithmetic() {
        let spec = OperatorSpec::fractional(0.5, 1).unwrap();
        let p = plan(&spec, &[2], 0).unwrap();
        assert_eq!((p.gamma, p.mu, p.k_o, p.order), (2.0, 1.0, 3, 5));
        let cal = OperatorSpec::caloric(0.25, 1).unwrap();
        let p = plan(&cal, &[1, 0], 0).unwrap();
        assert_eq!((p.gamma, p.mu), (1.0, 1.0));
    }

    #[test]
    fn polynomial_derivatives_of_square() {
        let d = polynomial_derivatives(&[(2.0, vec![2])], &[0.3], 2);
        assert!((d[0] - 0.09).abs() < 1e-15);
        assert!((d[1] - 0.6).abs() < 1e-15);
        assert!((d[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ball_grid_center() {
        let g = error_grid(2, 17, ErrorDomain::Ball);
        assert!(g.iter().any(|p| norm(p) == 0.0));
        assert!(g.iter().all(|p| norm(p) <= 1.0 + 1e-12));
        assert_eq!(error_grid(2, 17, ErrorDomain::Box).len(), 289);
    }
}
