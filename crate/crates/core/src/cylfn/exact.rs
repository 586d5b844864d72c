//! Exact integration of polynomial kernels.
//!
//! Wilson monomials are expanded into polynomials in the quaternion
//! coordinates of the link variables and integrated term by term with the
//! moments of the uniform measure on S³:
//!
//! `E[w^{2a} x^{2b} y^{2c} z^{2d}] = (2a−1)!!(2b−1)!!(2c−1)!!(2d−1)!! / (2^B (B+1)!)`,
//! `B = a+b+c+d`, and zero if any exponent is odd. Each link enters every
//! monomial with the same total degree, so each edge has a fixed
//! denominator and the whole integral is one integer over one integer.
//!
//! Wilson polynomials are gauge invariant, so links on a spanning tree are
//! fixed to the identity first and each loop is cyclically reduced; a
//! subdivided edge becomes a tree edge and drops out.
//!
//! Fourier monomials integrate by orthogonality of characters on the
//! per-edge torus.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{collect_terms, CylError, CylFunction, Density, Kernel, Side};
use crate::hoops::{free_reduce, BasedGraph, Direction, HoopWord, Letter};

/// Largest intermediate polynomial the Wilson expansion may build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactBudget {
    pub max_terms: usize,
}

impl Default for ExactBudget {
    fn default() -> Self {
        ExactBudget { max_terms: 250_000 }
    }
}

/// Exact integral of `f` (times `density` on the triple side) against the
/// per-edge product Haar measure.
pub fn integrate_exact(f: &CylFunction, density: Option<&Density>, budget: &ExactBudget) -> Result<Complex64, CylError> {
    if density.is_some() && f.side() != Side::Triple {
        return Err(CylError::SideMismatch { expected: Side::Triple, found: f.side() });
    }
    match f.kernel() {
        Kernel::Opaque(_) => Err(CylError::ExactUnavailable("opaque kernel".into())),
        Kernel::Wilson(p) => {
            let mut cache: HashMap<&[u32], f64> = HashMap::new();
            let mut total = Complex64::new(0.0, 0.0);
            for t in &p.terms {
                let v = match cache.get(t.powers.as_slice()) {
                    Some(v) => *v,
                    None => {
                        let v = wilson_monomial_integral(f.graph(), f.loops(), &t.powers, budget)?;
                        cache.insert(&t.powers, v);
                        v
                    }
                };
                total += t.coeff * v;
            }
            Ok(total)
        }
        Kernel::Fourier(p) => {
            let n_edges = f.graph().n_edges();
            let terms = p.edge_terms(f.loops(), n_edges)?;
            let weights = match density {
                Some(d) => {
                    if d.graph().n_edges() != n_edges {
                        return Err(CylError::GraphMismatch);
                    }
                    collect_terms(d.edge_terms())
                }
                None => HashMap::from([(vec![0; n_edges], Complex64::new(1.0, 0.0))]),
            };
            let mut total = Complex64::new(0.0, 0.0);
            for (k, c) in &terms {
                let neg: Vec<i64> = k.iter().map(|x| -x).collect();
                if let Some(w) = weights.get(&neg) {
                    total += c * w;
                }
            }
            Ok(total)
        }
    }
}

type Monomial = Vec<u8>;
type Poly = HashMap<Monomial, i128>;

fn overflow() -> CylError {
    CylError::ExactUnavailable("coefficient overflow".into())
}

/// `∫ Π_j (½ Tr H(α_j))^{k_j}` over independent Haar links.
pub(crate) fn wilson_monomial_integral(
    graph: &BasedGraph,
    loops: &[HoopWord],
    powers: &[u32],
    budget: &ExactBudget,
) -> Result<f64, CylError> {
    let n_edges = graph.n_edges();
    let tree = graph.tree_edges();
    let mut words = Vec::with_capacity(loops.len());
    for w in loops {
        if let Some(e) = w.edges().find(|e| e.0 >= n_edges) {
            return Err(crate::connections::ConnectionError::UnknownEdge(e.0).into());
        }
        words.push(cyclic_reduce(free_reduce(w.letters().iter().copied().filter(|l| !tree[l.edge.0]))));
    }
    let mut degree = vec![0u64; n_edges];
    for (w, &k) in words.iter().zip(powers) {
        for l in w {
            degree[l.edge.0] += k as u64;
        }
    }
    // every monomial has this exact degree in the edge's four coordinates
    if degree.iter().any(|d| d % 2 == 1) {
        return Ok(0.0);
    }
    if degree.iter().any(|&d| d > u8::MAX as u64) {
        return Err(CylError::ExactUnavailable("link degree above 255".into()));
    }
    let used: Vec<usize> = (0..n_edges).filter(|&e| degree[e] > 0).collect();
    let slot: HashMap<usize, usize> = used.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let width = 4 * used.len();

    let mut product: Poly = HashMap::from([(vec![0u8; width], 1i128)]);
    for (w, &k) in words.iter().zip(powers) {
        if k == 0 {
            continue;
        }
        let trace = half_trace_poly(w, &slot, width, budget)?;
        for _ in 0..k {
            product = poly_mul(&product, &trace, budget)?;
        }
    }

    // numerator Σ c Π (2b−1)!!, denominator Π_e 2^{B_e} (B_e+1)!
    let mut numerator = BigInt::zero();
    let mut dfact_cache: HashMap<u8, BigInt> = HashMap::new();
    'mono: for (mono, &c) in &product {
        let mut term = BigInt::from(c);
        for &exp in mono {
            if exp % 2 == 1 {
                continue 'mono;
            }
            if exp > 0 {
                term *= dfact_cache.entry(exp).or_insert_with(|| double_factorial(exp as u64 - 1)).clone();
            }
        }
        numerator += term;
    }
    let mut denominator = BigInt::one();
    for &e in &used {
        let b = degree[e] / 2;
        denominator *= BigInt::one() << b;
        denominator *= factorial(b + 1);
    }
    BigRational::new(numerator, denominator).to_f64().ok_or_else(overflow)
}

/// Scalar part of the holonomy quaternion of `w` as a polynomial in the
/// link coordinates; the scalar part is exactly `½ Tr`.
fn half_trace_poly(w: &[Letter], slot: &HashMap<usize, usize>, width: usize, budget: &ExactBudget) -> Result<Poly, CylError> {
    let mut q: [Poly; 4] = [HashMap::from([(vec![0u8; width], 1i128)]), HashMap::new(), HashMap::new(), HashMap::new()];
    for l in w {
        let base = 4 * slot[&l.edge.0];
        let (vw, vx, vy, vz) = (base, base + 1, base + 2, base + 3);
        let s: i128 = match l.dir {
            Direction::Forward => 1,
            Direction::Backward => -1,
        };
        let [a, b, c, d] = &q;
        let mut nw = Poly::new();
        add_times_var(&mut nw, a, vw, 1)?;
        add_times_var(&mut nw, b, vx, -s)?;
        add_times_var(&mut nw, c, vy, -s)?;
        add_times_var(&mut nw, d, vz, -s)?;
        let mut nx = Poly::new();
        add_times_var(&mut nx, a, vx, s)?;
        add_times_var(&mut nx, b, vw, 1)?;
        add_times_var(&mut nx, c, vz, s)?;
        add_times_var(&mut nx, d, vy, -s)?;
        let mut ny = Poly::new();
        add_times_var(&mut ny, a, vy, s)?;
        add_times_var(&mut ny, b, vz, -s)?;
        add_times_var(&mut ny, c, vw, 1)?;
        add_times_var(&mut ny, d, vx, s)?;
        let mut nz = Poly::new();
        add_times_var(&mut nz, a, vz, s)?;
        add_times_var(&mut nz, b, vy, s)?;
        add_times_var(&mut nz, c, vx, -s)?;
        add_times_var(&mut nz, d, vw, 1)?;
        q = [nw, nx, ny, nz];
        for p in q.iter_mut() {
            p.retain(|_, c| *c != 0);
        }
        if q.iter().map(HashMap::len).sum::<usize>() > budget.max_terms {
            return Err(CylError::ExactUnavailable(format!("expansion exceeds {} terms", budget.max_terms)));
        }
    }
    let [w_part, _, _, _] = q;
    Ok(w_part)
}

/// Strips matching letters from both ends; the trace is unchanged.
fn cyclic_reduce(mut w: Vec<Letter>) -> Vec<Letter> {
    let mut start = 0;
    while w.len() - start >= 2 && w[start] == w[w.len() - 1].inverse() {
        start += 1;
        w.pop();
    }
    w.drain(..start);
    w
}

fn add_times_var(target: &mut Poly, src: &Poly, var: usize, sign: i128) -> Result<(), CylError> {
    for (mono, &c) in src {
        let mut m = mono.clone();
        m[var] += 1;
        let slot = target.entry(m).or_insert(0);
        *slot = slot.checked_add(sign * c).ok_or_else(overflow)?;
    }
    Ok(())
}

fn poly_mul(a: &Poly, b: &Poly, budget: &ExactBudget) -> Result<Poly, CylError> {
    let mut out = Poly::with_capacity(a.len().max(b.len()));
    for (ma, &ca) in a {
        for (mb, &cb) in b {
            let m: Monomial = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
            let prod = ca.checked_mul(cb).ok_or_else(overflow)?;
            let slot = out.entry(m).or_insert(0);
            *slot = slot.checked_add(prod).ok_or_else(overflow)?;
        }
        if out.len() > budget.max_terms {
            return Err(CylError::ExactUnavailable(format!("expansion exceeds {} terms", budget.max_terms)));
        }
    }
    out.retain(|_, c| *c != 0);
    Ok(out)
}

fn double_factorial(n: u64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc
}

fn factorial(n: u64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * k)
}
