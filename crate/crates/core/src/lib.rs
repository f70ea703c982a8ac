//! Nonlocal operators on the unit ball: Green kernel, Dirichlet solver,
//! principal eigenpair, and a dictionary pipeline building Lambda-harmonic
//! approximants of prescribed targets.

pub mod approximator;
pub mod constants;
pub mod eigen;
pub mod field;
pub mod fracop;
pub mod green;
pub mod jacobi;
pub mod jet;
pub mod par;
pub mod poisson;
pub mod quad;
pub mod spanner;
pub mod table;

pub use constants::{gamma, green_constant, normalization_constant, FracOrder};
pub use field::{ScalarField, Sphere};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point {0:?} lies outside the smooth region of the field")]
    OutsideSmoothRegion(Vec<f64>),
    #[error("finite-difference stencil of half-width {0} leaves the smooth region")]
    StencilOutOfRange(f64),
    #[error("coincident points")]
    CoincidentPoints,
    #[error("direction is not inward: e.omega = {0}")]
    NotInward(f64),
    #[error("series evaluated outside its convergence range: r = {0}")]
    SeriesDivergence(f64),
    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error("dictionary does not span the target (relative residual {residual:e})")]
    RankDeficient { residual: f64 },
    #[error("target error {target:e} not reached before eta underflow (best {best:e} at eta {eta:e})")]
    EtaUnderflow { target: f64, best: f64, eta: f64 },
    #[error("polynomial fit error {achieved:e} above budget {budget:e} at degree {degree}")]
    FitBudget { achieved: f64, budget: f64, degree: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}
