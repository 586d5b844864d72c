//! Exponential polynomials `Σ c · Π x_j^{a_j} · exp(i Σ k_j x_j)` in a fixed
//! number of real variables, closed under sums, products and derivatives.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub freqs: Vec<i64>,
}

impl Monomial {
    pub fn one(n_vars: usize) -> Self {
        Monomial { exps: vec![0; n_vars], freqs: vec![0; n_vars] }
    }

    pub fn uses_var(&self, j: usize) -> bool {
        self.exps[j] != 0 || self.freqs[j] != 0
    }

    fn times(&self, other: &Monomial) -> Monomial {
        Monomial {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
            freqs: self.freqs.iter().zip(&other.freqs).map(|(a, b)| a + b).collect(),
        }
    }

    /// `(Π x^a, exp(i k·x))` at `x`.
    fn parts(&self, x: &[f64]) -> (f64, Complex64) {
        let mut poly = 1.0;
        let mut phase = 0.0;
        for ((&a, &k), &xj) in self.exps.iter().zip(&self.freqs).zip(x) {
            if a != 0 {
                poly *= xj.powi(a as i32);
            }
            if k != 0 {
                phase += k as f64 * xj;
            }
        }
        (poly, Complex64::from_polar(1.0, phase))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoly {
    n_vars: usize,
    terms: BTreeMap<Monomial, Complex64>,
}

impl ExpPoly {
    pub fn zero(n_vars: usize) -> Self {
        ExpPoly { n_vars, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, c: Complex64) -> Self {
        let mut p = ExpPoly::zero(n_vars);
        p.push(Monomial::one(n_vars), c);
        p
    }

    /// The coordinate function `x_j`.
    pub fn variable(n_vars: usize, j: usize) -> Self {
        let mut m = Monomial::one(n_vars);
        m.exps[j] = 1;
        let mut p = ExpPoly::zero(n_vars);
        p.push(m, Complex64::new(1.0, 0.0));
        p
    }

    /// `c · exp(i k·x)`.
    pub fn exp_i(freqs: Vec<i64>, c: Complex64) -> Self {
        let n_vars = freqs.len();
        let mut p = ExpPoly::zero(n_vars);
        p.push(Monomial { exps: vec![0; n_vars], freqs }, c);
        p
    }

    /// Adds `c · m`, dropping the entry if it cancels to exactly zero.
    pub fn push(&mut self, m: Monomial, c: Complex64) {
        assert_eq!(m.exps.len(), self.n_vars, "monomial arity");
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == Complex64::new(0.0, 0.0) {
                    o.remove();
                }
            }
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, Complex64> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn uses_var(&self, j: usize) -> bool {
        self.terms.keys().any(|m| m.uses_var(j))
    }

    pub fn scale(&self, c: Complex64) -> ExpPoly {
        let mut out = ExpPoly::zero(self.n_vars);
        for (m, v) in &self.terms {
            out.push(m.clone(), v * c);
        }
        out
    }

    pub fn derivative(&self, j: usize) -> ExpPoly {
        let mut out = ExpPoly::zero(self.n_vars);
        for (m, c) in &self.terms {
            if m.freqs[j] != 0 {
                out.push(m.clone(), c * Complex64::new(0.0, m.freqs[j] as f64));
            }
            if m.exps[j] != 0 {
                let mut lower = m.clone();
                lower.exps[j] -= 1;
                out.push(lower, c * m.exps[j] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.n_vars, "point arity");
        self.terms
            .iter()
            .map(|(m, c)| {
                let (poly, e) = m.parts(x);
                c * e * poly
            })
            .sum()
    }

    /// All first partials at `x`, without building derivative polynomials.
    pub fn gradient(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n_vars, "point arity");
        let mut grad = vec![Complex64::new(0.0, 0.0); self.n_vars];
        for (m, c) in &self.terms {
            let (poly, e) = m.parts(x);
            let ce = c * e;
            for j in 0..self.n_vars {
                if m.freqs[j] != 0 {
                    grad[j] += ce * Complex64::new(0.0, m.freqs[j] as f64) * poly;
                }
                if m.exps[j] != 0 {
                    let rest: f64 = (0..self.n_vars)
                        .filter(|&i| i != j && m.exps[i] != 0)
                        .map(|i| x[i].powi(m.exps[i] as i32))
                        .product();
                    let a = m.exps[j];
                    grad[j] += ce * (a as f64 * x[j].powi(a as i32 - 1) * rest);
                }
            }
        }
        grad
    }

    /// Largest coefficient difference, counting missing terms as zero.
    pub fn max_coeff_diff(&self, other: &ExpPoly) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.terms.get(m).copied().unwrap_or(zero)).norm());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }
}

impl Add for &ExpPoly {
    type Output = ExpPoly;
    fn add(self, rhs: &ExpPoly) -> ExpPoly {
        assert_eq!(self.n_vars, rhs.n_vars, "arity");
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.push(m.clone(), *c);
        }
        out
    }
}

impl Sub for &ExpPoly {
    type Output = ExpPoly;
    fn sub(self, rhs: &ExpPoly) -> ExpPoly {
        self + &-rhs
    }
}

impl Neg for &ExpPoly {
    type Output = ExpPoly;
    fn neg(self) -> ExpPoly {
        ExpPoly { n_vars: self.n_vars, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }
}

impl Mul for &ExpPoly {
    type Output = ExpPoly;
    fn mul(self, rhs: &ExpPoly) -> ExpPoly {
        assert_eq!(self.n_vars, rhs.n_vars, "arity");
        let mut out = ExpPoly::zero(self.n_vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.push(ma.times(mb), ca * cb);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn derivative_of_x_exp_ix() {
        // d/dx (x e^{2ix}) = e^{2ix} + 2i x e^{2ix}
        let p = &ExpPoly::variable(1, 0) * &ExpPoly::exp_i(vec![2], c(1.0, 0.0));
        let d = p.derivative(0);
        for x in [-1.3, 0.0, 0.7, 2.9] {
            let want = Complex64::from_polar(1.0, 2.0 * x) * c(1.0, 2.0 * x);
            assert!((d.eval(&[x]) - want).norm() < 1e-14);
            assert!((p.gradient(&[x])[0] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn cancellation_removes_terms() {
        let p = ExpPoly::exp_i(vec![1, -1], c(0.5, 0.25));
        assert!((&p - &p).is_zero());
        assert!(ExpPoly::constant(2, c(3.0, 0.0)).derivative(1).is_zero());
    }

    #[test]
    fn product_rule_symbolically() {
        let f = &ExpPoly::exp_i(vec![1, 2], c(0.3, -0.1)) + &ExpPoly::variable(2, 1);
        let g = &ExpPoly::exp_i(vec![-2, 1], c(1.0, 0.5)) * &ExpPoly::variable(2, 0);
        for j in 0..2 {
            let lhs = (&f * &g).derivative(j);
            let rhs = &(&f.derivative(j) * &g) + &(&f * &g.derivative(j));
            assert!(lhs.max_coeff_diff(&rhs) < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_symbolic_derivatives() {
        let f = &(&ExpPoly::exp_i(vec![1, 0, -2], c(0.2, 0.9)) * &ExpPoly::variable(3, 2))
            * &(&ExpPoly::variable(3, 2) + &ExpPoly::exp_i(vec![0, 3, 1], c(-0.4, 0.0)));
        let x = [0.4, -1.1, 2.2];
        let g = f.gradient(&x);
        for (j, gj) in g.iter().enumerate() {
            assert!((f.derivative(j).eval(&x) - gj).norm() < 1e-13);
        }
    }
}
