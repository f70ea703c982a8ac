//! Scalar fields on R^n with declared support and non-smooth sets.

use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Sphere { center, radius }
    }

    pub fn centered(dim: usize, radius: f64) -> Self {
        Sphere { center: vec![0.0; dim], radius }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(&self.center, x) < self.radius
    }
}

/// The set {y : |y[axes] - center| = radius}. When `axes` covers every
/// coordinate this is a sphere; otherwise it is a cylinder over the other axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kink {
    pub axes: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Kink {
    pub fn sphere(center: Vec<f64>, radius: f64) -> Self {
        Kink { axes: (0..center.len()).collect(), center, radius }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let r2: f64 = self.axes.iter().zip(&self.center).map(|(&i, c)| (x[i] - c).powi(2)).sum();
        (r2.sqrt() - self.radius).abs()
    }

    /// Restriction to the slice where only `block` varies and the rest is fixed at `at`.
    /// Returns `None` when the slice does not meet the set in a lower-dimensional way.
    pub fn restrict(&self, block: std::ops::Range<usize>, at: &[f64]) -> Option<Kink> {
        let mut axes = Vec::new();
        let mut center = Vec::new();
        let mut fixed = 0.0;
        for (&i, &c) in self.axes.iter().zip(&self.center) {
            if block.contains(&i) {
                axes.push(i - block.start);
                center.push(c);
            } else {
                fixed += (at[i] - c).powi(2);
            }
        }
        let r2 = self.radius * self.radius - fixed;
        if axes.is_empty() || r2 <= 0.0 {
            return None;
        }
        Some(Kink { axes, center, radius: r2.sqrt() })
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A real field on R^dim that vanishes outside `support()`.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// Ball outside of which the field is zero.
    fn support(&self) -> Sphere;
    /// Sets across which the field may fail to be smooth.
    fn kinks(&self) -> Vec<Kink> {
        Vec::new()
    }
    /// Exact d^order/dx_axis^order at x, when the field knows it.
    fn axis_derivative(&self, _x: &[f64], _axis: usize, _order: u32) -> Option<f64> {
        None
    }

    /// Distance from x to the nearest declared kink (infinite if none).
    fn smooth_radius_at(&self, x: &[f64]) -> f64 {
        self.kinks().iter().map(|k| k.distance(x)).fold(f64::INFINITY, f64::min)
    }
}

type Eval = dyn Fn(&[f64]) -> f64 + Send + Sync;
type AxisDerivative = dyn Fn(&[f64], usize, u32) -> Option<f64> + Send + Sync;

/// Field from a closure.
pub struct FnField {
    dim: usize,
    f: Box<Eval>,
    support: Sphere,
    kinks: Vec<Kink>,
    derivative: Option<Box<AxisDerivative>>,
}

impl FnField {
    /// `f` must already vanish outside `support`.
    pub fn new(dim: usize, support: Sphere, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnField { dim, f: Box::new(f), support, kinks: Vec::new(), derivative: None }
    }

    pub fn with_kinks(mut self, kinks: Vec<Kink>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn with_derivative(mut self, d: impl Fn(&[f64], usize, u32) -> Option<f64> + Send + Sync + 'static) -> Self {
        self.derivative = Some(Box::new(d));
        self
    }

    /// (1 - |x|^2)^p_+ on the unit ball.
    pub fn ball_power(dim: usize, p: f64) -> Self {
        FnField::new(dim, Sphere::centered(dim, 1.0), move |x| {
            let q = 1.0 - x.iter().map(|v| v * v).sum::<f64>();
            if q > 0.0 {
                q.powf(p)
            } else {
                0.0
            }
        })
        .with_kinks(vec![Kink::sphere(vec![0.0; dim], 1.0)])
    }

    /// Smooth bump exp(1 - 1/(1 - |x-c|^2/r^2)), equal to 1 at the center.
    pub fn bump(center: Vec<f64>, radius: f64) -> Self {
        let dim = center.len();
        let c = center.clone();
        FnField::new(dim, Sphere::new(center, radius), move |x| bump_value(dist(x, &c) / radius))
    }

    /// The constant 1 restricted to the unit ball.
    pub fn unit_ball_indicator(dim: usize) -> Self {
        FnField::new(dim, Sphere::centered(dim, 1.0), |x| if norm(x) < 1.0 { 1.0 } else { 0.0 })
            .with_kinks(vec![Kink::sphere(vec![0.0; dim], 1.0)])
    }

    pub fn zero(dim: usize) -> Self {
        FnField::new(dim, Sphere::centered(dim, 1.0), |_| 0.0).with_derivative(|_, _, _| Some(0.0))
    }
}

pub fn bump_value(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn support(&self) -> Sphere {
        self.support.clone()
    }
    fn kinks(&self) -> Vec<Kink> {
        self.kinks.clone()
    }
    fn axis_derivative(&self, x: &[f64], axis: usize, order: u32) -> Option<f64> {
        self.derivative.as_ref().and_then(|d| d(x, axis, order))
    }
}

/// The field restricted to one block of coordinates, the others frozen.
pub struct Slice<'a, F: ScalarField + ?Sized> {
    base: &'a F,
    at: Vec<f64>,
    block: std::ops::Range<usize>,
}

impl<'a, F: ScalarField + ?Sized> Slice<'a, F> {
    pub fn new(base: &'a F, at: &[f64], block: std::ops::Range<usize>) -> Self {
        assert!(block.end <= at.len() && at.len() <= MAX_DIM);
        Slice { base, at: at.to_vec(), block }
    }

    /// The block coordinates of the frozen point.
    pub fn local_point(&self) -> Vec<f64> {
        self.at[self.block.clone()].to_vec()
    }
}

impl<F: ScalarField + ?Sized> ScalarField for Slice<'_, F> {
    fn dim(&self) -> usize {
        self.block.len()
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_DIM];
        let n = self.at.len();
        buf[..n].copy_from_slice(&self.at);
        buf[self.block.clone()].copy_from_slice(y);
        self.base.eval(&buf[..n])
    }
    fn support(&self) -> Sphere {
        let s = self.base.support();
        let fixed: f64 =
            (0..self.at.len()).filter(|i| !self.block.contains(i)).map(|i| (self.at[i] - s.center[i]).powi(2)).sum();
        let r = (s.radius * s.radius - fixed).max(0.0).sqrt();
        Sphere::new(s.center[self.block.clone()].to_vec(), r)
    }
    fn kinks(&self) -> Vec<Kink> {
        self.base.kinks().iter().filter_map(|k| k.restrict(self.block.clone(), &self.at)).collect()
    }
    fn axis_derivative(&self, y: &[f64], axis: usize, order: u32) -> Option<f64> {
        let mut buf = self.at.clone();
        buf[self.block.clone()].copy_from_slice(y);
        self.base.axis_derivative(&buf, axis + self.block.start, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kink_restriction_of_cylinder() {
        // |y0 - 0.5| = 1 in R^2 restricted to the y0 line at y1 = 3: still the two points
        let k = Kink { axes: vec![0], center: vec![0.5], radius: 1.0 };
        let r = k.restrict(0..1, &[0.0, 3.0]).unwrap();
        assert_eq!(r.center, vec![0.5]);
        assert_eq!(r.radius, 1.0);
        // restricted to the y1 line the set is constant in y1
        assert!(k.restrict(1..2, &[0.0, 3.0]).is_none());
    }

    #[test]
    fn slice_support_shrinks() {
        let f = FnField::ball_power(2, 0.5);
        let s = Slice::new(&f, &[0.0, 0.6], 0..1);
        assert!((s.support().radius - 0.8).abs() < 1e-15);
        assert!((s.eval(&[0.0]) - 0.8).abs() < 1e-15);
        let k = s.kinks();
        assert_eq!(k.len(), 1);
        assert!((k[0].radius - 0.8).abs() < 1e-15);
    }

    #[test]
    fn bump_vanishes_outside() {
        let b = FnField::bump(vec![0.2], 0.3);
        assert_eq!(b.eval(&[0.6]), 0.0);
        assert_eq!(b.eval(&[0.2]), 1.0);
    }
}
