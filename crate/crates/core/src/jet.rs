//! Truncated multivariate Taylor series ("jets") at a point, used to get exact
//! origin derivatives of product-form dictionary elements.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// All multi-indices in `nvars` variables with total order at most `order`,
/// sorted by (|i|, i) lexicographically.
#[derive(Debug)]
pub struct MultiIndexSet {
    pub nvars: usize,
    pub order: usize,
    pub indices: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
    products: Vec<(usize, usize, usize)>,
}

fn enumerate(nvars: usize, total: usize) -> Vec<Vec<u32>> {
    if nvars == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in enumerate(nvars - 1, total - first) {
            rest.insert(0, first as u32);
            out.push(rest);
        }
    }
    out
}

impl MultiIndexSet {
    pub fn get(nvars: usize, order: usize) -> Arc<MultiIndexSet> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MultiIndexSet>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(s) = cache.lock().unwrap().get(&(nvars, order)) {
            return s.clone();
        }
        let set = Arc::new(Self::build(nvars, order));
        cache.lock().unwrap().insert((nvars, order), set.clone());
        set
    }

    fn build(nvars: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for total in 0..=order {
            let mut layer = enumerate(nvars, total);
            layer.sort();
            indices.extend(layer);
        }
        let lookup: HashMap<Vec<u32>, usize> = indices.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            let da: u32 = a.iter().sum();
            for (j, b) in indices.iter().enumerate() {
                let db: u32 = b.iter().sum();
                if (da + db) as usize > order {
                    continue;
                }
                let s: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i, j, lookup[&s]));
            }
        }
        MultiIndexSet { nvars, order, indices, lookup, products }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, idx: &[u32]) -> Option<usize> {
        self.lookup.get(idx).copied()
    }

    /// iota! = prod of factorials.
    pub fn factorial(idx: &[u32]) -> f64 {
        idx.iter().map(|&k| factorial(k as usize)).product()
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Coefficients of y^iota (not derivatives) in the order of the index set.
#[derive(Clone, Debug)]
pub struct Jet {
    pub set: Arc<MultiIndexSet>,
    pub coef: Vec<f64>,
}

impl Jet {
    pub fn constant(set: &Arc<MultiIndexSet>, v: f64) -> Self {
        let mut coef = vec![0.0; set.len()];
        coef[0] = v;
        Jet { set: set.clone(), coef }
    }

    /// The jet of y_var + value.
    pub fn variable(set: &Arc<MultiIndexSet>, var: usize, value: f64) -> Self {
        let mut j = Jet::constant(set, value);
        if set.order >= 1 {
            let mut e = vec![0u32; set.nvars];
            e[var] = 1;
            j.coef[set.position(&e).unwrap()] = 1.0;
        }
        j
    }

    /// Univariate series sum_i c_i y_var^i.
    pub fn univariate(set: &Arc<MultiIndexSet>, var: usize, c: &[f64]) -> Self {
        let mut j = Jet::constant(set, 0.0);
        let mut e = vec![0u32; set.nvars];
        for (i, &ci) in c.iter().enumerate().take(set.order + 1) {
            e[var] = i as u32;
            j.coef[set.position(&e).unwrap()] = ci;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet { set: self.set.clone(), coef: self.coef.iter().zip(&o.coef).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet { set: self.set.clone(), coef: self.coef.iter().map(|a| c * a).collect() }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut coef = vec![0.0; self.coef.len()];
        for &(i, j, k) in &self.set.products {
            coef[k] += self.coef[i] * o.coef[j];
        }
        Jet { set: self.set.clone(), coef }
    }

    /// g(self) given the derivatives g^(j) at self.value(), j = 0..=order.
    pub fn compose(&self, g: &[f64]) -> Jet {
        let mut h = self.clone();
        h.coef[0] = 0.0;
        let mut out = Jet::constant(&self.set, g[0]);
        let mut power = Jet::constant(&self.set, 1.0);
        for (j, &gj) in g.iter().enumerate().skip(1).take(self.set.order) {
            power = power.mul(&h);
            out = out.add(&power.scale(gj / factorial(j)));
        }
        out
    }

    /// d^iota at the expansion point, for every index in order.
    pub fn derivatives(&self) -> Vec<f64> {
        self.coef.iter().zip(&self.set.indices).map(|(c, idx)| c * MultiIndexSet::factorial(idx)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let s = MultiIndexSet::get(2, 2);
        let expect: Vec<Vec<u32>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]];
        assert_eq!(s.indices, expect);
    }

    #[test]
    fn compose_exp_of_sum() {
        // exp(x + 2y) at 0: d^(i,j) = 2^j
        let s = MultiIndexSet::get(2, 4);
        let arg = Jet::variable(&s, 0, 0.0).add(&Jet::variable(&s, 1, 0.0).scale(2.0));
        let e = arg.compose(&[1.0; 5]);
        for (d, idx) in e.derivatives().iter().zip(&s.indices) {
            assert!((d - 2f64.powi(idx[1] as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_rule() {
        // (1 + x)^2 * y
        let s = MultiIndexSet::get(2, 3);
        let x = Jet::variable(&s, 0, 1.0);
        let y = Jet::variable(&s, 1, 0.0);
        let d = x.mul(&x).mul(&y).derivatives();
        assert_eq!(d[s.position(&[0, 1]).unwrap()], 1.0);
        assert_eq!(d[s.position(&[1, 1]).unwrap()], 2.0);
        assert_eq!(d[s.position(&[2, 1]).unwrap()], 2.0);
        assert_eq!(d[s.position(&[0, 2]).unwrap()], 0.0);
    }
}
