//! Polynomial targets written as sums of monomials, e.g. `1 + x^2/4` or `-2*t*x`.

use anyhow::{bail, Context, Result};

/// Coefficient and exponent vector of each monomial; variables in the given order.
pub fn parse_polynomial(src: &str, vars: &[&str]) -> Result<Vec<(f64, Vec<u32>)>> {
    let s: String = src.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty target");
    }
    let mut terms = Vec::new();
    for (sign, body) in split_terms(&s)? {
        let mut coef = sign;
        let mut iota = vec![0u32; vars.len()];
        let (num, den) = match body.split_once('/') {
            Some((a, b)) => (a, Some(b)),
            None => (body, None),
        };
        if let Some(d) = den {
            let d: f64 = d.parse().with_context(|| format!("bad denominator `{d}`"))?;
            if d == 0.0 {
                bail!("division by zero in `{body}`");
            }
            coef /= d;
        }
        for factor in num.split('*') {
            if let Ok(v) = factor.parse::<f64>() {
                coef *= v;
                continue;
            }
            let (name, power) = match factor.split_once('^') {
                Some((n, p)) => (n, p.parse::<u32>().with_context(|| format!("bad exponent in `{factor}`"))?),
                None => (factor, 1),
            };
            let pos = vars
                .iter()
                .position(|v| *v == name)
                .with_context(|| format!("unknown variable `{name}` (expected one of {vars:?})"))?;
            iota[pos] += power;
        }
        if coef != 0.0 {
            match terms.iter_mut().find(|(_, i): &&mut (f64, Vec<u32>)| *i == iota) {
                Some((c, _)) => *c += coef,
                None => terms.push((coef, iota)),
            }
        }
    }
    terms.retain(|(c, _)| *c != 0.0);
    Ok(terms)
}

fn split_terms(s: &str) -> Result<Vec<(f64, &str)>> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut start = 0;
    let mut sign = 1.0;
    for i in 0..=bytes.len() {
        let at_sep = i == bytes.len()
            || ((bytes[i] == b'+' || bytes[i] == b'-')
                && i > 0
                && !matches!(bytes[i - 1], b'e' | b'E' | b'^' | b'*' | b'/' | b'+' | b'-'));
        if i == 0 && i < bytes.len() && (bytes[0] == b'+' || bytes[0] == b'-') {
            continue;
        }
        if at_sep {
            let mut body = &s[start..i];
            let mut sg = sign;
            while let Some(rest) = body.strip_prefix('-').or_else(|| body.strip_prefix('+')) {
                if body.starts_with('-') {
                    sg = -sg;
                }
                body = rest;
            }
            if body.is_empty() {
                bail!("malformed target `{s}`");
            }
            out.push((sg, body));
            if i < bytes.len() {
                sign = if bytes[i] == b'-' { -1.0 } else { 1.0 };
                start = i + 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_profile() {
        let p = parse_polynomial("1 + x^2/4", &["t", "x"]).unwrap();
        assert_eq!(p, vec![(1.0, vec![0, 0]), (0.25, vec![0, 2])]);
    }

    #[test]
    fn signs_and_products() {
        let p = parse_polynomial("-2*t*x + x^2 - 1e-1", &["t", "x"]).unwrap();
        assert_eq!(p, vec![(-2.0, vec![1, 1]), (1.0, vec![0, 2]), (-0.1, vec![0, 0])]);
    }

    #[test]
    fn zero_and_errors() {
        assert!(parse_polynomial("0", &["x"]).unwrap().is_empty());
        assert!(parse_polynomial("y^2", &["x"]).is_err());
        assert!(parse_polynomial("x^", &["x"]).is_err());
    }
}
