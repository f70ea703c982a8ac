//! Jacobi polynomials P_k^{(a,b)} and their series.

/// P_0..P_{out.len()-1} at t by the three-term recurrence.
pub fn jacobi_all(a: f64, b: f64, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * t;
    let ab = a + b;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        let c = 2.0 * kf + ab;
        let d1 = 2.0 * (kf + 1.0) * (kf + ab + 1.0) * c;
        let d2 = (c + 1.0) * (c * (c + 2.0) * t + a * a - b * b);
        let d3 = 2.0 * (kf + a) * (kf + b) * (c + 2.0);
        out[k + 1] = (d2 * out[k] - d3 * out[k - 1]) / d1;
    }
}

/// Sum of c_k P_k^{(a,b)}(t).
pub fn jacobi_series(c: &[f64], a: f64, b: f64, t: f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let ab = a + b;
    let mut p0 = 1.0;
    let mut sum = c[0];
    if c.len() == 1 {
        return sum;
    }
    let mut p1 = 0.5 * (a - b) + 0.5 * (ab + 2.0) * t;
    sum += c[1] * p1;
    for (k, &ck) in c.iter().enumerate().skip(2) {
        let kf = (k - 1) as f64;
        let cc = 2.0 * kf + ab;
        let d1 = 2.0 * (kf + 1.0) * (kf + ab + 1.0) * cc;
        let d2 = (cc + 1.0) * (cc * (cc + 2.0) * t + a * a - b * b);
        let d3 = 2.0 * (kf + a) * (kf + b) * (cc + 2.0);
        let p2 = (d2 * p1 - d3 * p0) / d1;
        sum += ck * p2;
        p0 = p1;
        p1 = p2;
    }
    sum
}

/// i-th derivative in t of sum c_k P_k^{(a,b)}(t), using
/// d/dt P_k^{(a,b)} = (k+a+b+1)/2 P_{k-1}^{(a+1,b+1)}.
pub fn jacobi_series_derivative(c: &[f64], a: f64, b: f64, t: f64, i: usize) -> f64 {
    if i == 0 {
        return jacobi_series(c, a, b, t);
    }
    if c.len() <= i {
        return 0.0;
    }
    let shifted: Vec<f64> = c
        .iter()
        .enumerate()
        .skip(i)
        .map(|(k, &ck)| {
            let f: f64 = (1..=i).map(|l| 0.5 * (k as f64 + a + b + l as f64)).product();
            ck * f
        })
        .collect();
    jacobi_series(&shifted, a + i as f64, b + i as f64, t)
}

/// P_k^{(a,b)}(1) = binom(k+a, k).
pub fn jacobi_at_one(k: usize, a: f64) -> f64 {
    (1..=k).map(|j| (j as f64 + a) / j as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_special_case() {
        let mut p = [0.0; 4];
        jacobi_all(0.0, 0.0, 0.3, &mut p);
        assert!((p[2] - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((p[3] - 0.5 * (5.0 * 0.027 - 3.0 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn value_at_one() {
        let mut p = [0.0; 9];
        jacobi_all(0.4, -0.5, 1.0, &mut p);
        for (k, v) in p.iter().enumerate() {
            assert!((v - jacobi_at_one(k, 0.4)).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let c = [0.3, -1.2, 0.7, 0.25, -0.1, 0.05];
        let (a, b, t, h) = (0.7, -0.5, 0.21, 1e-5);
        for i in 1..3 {
            let fd = (jacobi_series_derivative(&c, a, b, t + h, i - 1)
                - jacobi_series_derivative(&c, a, b, t - h, i - 1))
                / (2.0 * h);
            let an = jacobi_series_derivative(&c, a, b, t, i);
            assert!((fd - an).abs() < 1e-7 * an.abs().max(1.0), "{i}: {fd} {an}");
        }
    }
}
