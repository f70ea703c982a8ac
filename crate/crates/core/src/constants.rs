//! Gamma function and the normalization constants of the fractional Laplacian
//! and of the Green kernel of the unit ball.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::Error;

// Lanczos coefficients with g = 10.900511 (Pugh 2004, n = 11).
const LANCZOS_G: f64 = 10.900511;
const LANCZOS_D: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];
const TWO_SQRT_E_OVER_PI: f64 = 1.860_382_734_205_265_7;
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;

fn lanczos_sum(x: f64) -> f64 {
    LANCZOS_D.iter().enumerate().skip(1).fold(LANCZOS_D[0], |acc, (i, &d)| acc + d / (x + i as f64 - 1.0))
}

/// Euler Gamma for positive arguments.
pub fn gamma(x: f64) -> Result<f64, Error> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma undefined at {x}")));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma_unchecked(1.0 - x))
    } else {
        lanczos_sum(x) * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_G) / E).powf(x - 0.5)
    }
}

/// Natural log of Gamma for positive arguments; stays finite where Gamma overflows.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        lanczos_sum(x).ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + LANCZOS_G).ln() - 1.0)
    }
}

/// Order of a fractional Laplacian, strictly inside (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self, Error> {
        if s > 0.0 && s < 1.0 {
            Ok(FracOrder(s))
        } else {
            Err(Error::Domain(format!("fractional order {s} outside (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self, Error> {
        FracOrder::new(s)
    }
}

impl From<FracOrder> for f64 {
    fn from(s: FracOrder) -> f64 {
        s.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub n: u32,
    pub s: FracOrder,
    /// Kernel constant C(n,s) of the singular-integral definition.
    pub c_norm: f64,
    /// Green constant kappa(n,s) of the ball representation formula.
    pub kappa_green: f64,
}

fn cache() -> &'static Mutex<HashMap<(u32, u64), Constants>> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u64), Constants>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Constants {
    /// Memoized per (n, s).
    pub fn get(n: u32, s: FracOrder) -> Result<Self, Error> {
        if n == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let key = (n, s.get().to_bits());
        if let Some(c) = cache().lock().unwrap().get(&key) {
            return Ok(*c);
        }
        let c = Constants {
            n,
            s,
            c_norm: normalization_constant_raw(n, s.get()),
            kappa_green: green_constant_raw(n, s.get()),
        };
        cache().lock().unwrap().insert(key, c);
        Ok(c)
    }
}

fn normalization_constant_raw(n: u32, s: f64) -> f64 {
    let h = 0.5 * n as f64;
    4f64.powf(s) * s * gamma_unchecked(h + s) / (PI.powf(h) * gamma_unchecked(1.0 - s))
}

fn green_constant_raw(n: u32, s: f64) -> f64 {
    let h = 0.5 * n as f64;
    let gs = gamma_unchecked(s);
    gamma_unchecked(h) / (4f64.powf(s) * PI.powf(h) * gs * gs)
}

/// C(n,s) = 4^s s Gamma(n/2+s) / (pi^{n/2} Gamma(1-s)).
pub fn normalization_constant(n: u32, s: FracOrder) -> Result<f64, Error> {
    Ok(Constants::get(n, s)?.c_norm)
}

/// kappa(n,s) = Gamma(n/2) / (4^s pi^{n/2} Gamma(s)^2).
pub fn green_constant(n: u32, s: FracOrder) -> Result<f64, Error> {
    Ok(Constants::get(n, s)?.kappa_green)
}

/// Value of (-Delta)^s (1-|x|^2)^s_+ inside the unit ball.
pub fn torsion_constant(n: u32, s: f64) -> f64 {
    let h = 0.5 * n as f64;
    4f64.powf(s) * gamma_unchecked(1.0 + s) * gamma_unchecked(h + s) / gamma_unchecked(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_trivial_values() {
        assert!(rel(gamma(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) < 1e-14);
        assert!(rel(gamma(5.0).unwrap(), 24.0) < 1e-14);
        assert!(gamma(0.0).is_err());
        assert!(gamma(-1.5).is_err());
    }

    #[test]
    fn ln_gamma_matches_gamma() {
        for &x in &[0.07, 0.3, 0.5, 1.7, 9.25, 33.0, 49.5] {
            assert!((ln_gamma(x) - gamma_unchecked(x).ln()).abs() < 1e-12 * (1.0 + ln_gamma(x).abs()));
        }
        // 170! would overflow gamma
        assert!(rel(ln_gamma(200.0), 857.933_669_825_857_5) < 1e-13);
    }

    #[test]
    fn constants_closed_forms() {
        let half = FracOrder::new(0.5).unwrap();
        assert!(rel(normalization_constant(1, half).unwrap(), 1.0 / PI) < 1e-13);
        assert!(rel(normalization_constant(2, half).unwrap(), 0.5 / PI) < 1e-13);
        assert!(rel(green_constant(1, half).unwrap(), 0.5 / PI) < 1e-13);
        assert!(rel(green_constant(2, half).unwrap(), 0.5 / (PI * PI)) < 1e-13);
        assert!(rel(green_constant(3, half).unwrap(), 0.25 / (PI * PI)) < 1e-13);
    }

    #[test]
    fn normalization_vanishes_at_the_ends() {
        for n in 1..=3 {
            let lo = normalization_constant(n, FracOrder::new(1e-9).unwrap()).unwrap();
            let hi = normalization_constant(n, FracOrder::new(1.0 - 1e-9).unwrap()).unwrap();
            assert!(lo < 1e-8 && hi < 1e-7, "n={n}: {lo} {hi}");
        }
    }

    #[test]
    fn frac_order_rejects_bounds() {
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.0).is_err());
        assert!(FracOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn torsion_constant_half_line() {
        assert!(rel(torsion_constant(1, 0.5), 1.0) < 1e-14);
    }
}
