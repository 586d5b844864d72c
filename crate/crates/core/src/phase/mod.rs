//! The product phase space of abelian connections and triples on a graph.
//!
//! Each edge carries three real coordinates: `p_e` (connection), `q_e`
//! (flux) and `s_e = orient_e · area_e` (metric). A connection-side loop
//! angle is `Σ_e n_α(e) p_e`; a triple-side loop phase is
//! `Σ_e n_β(e) (s_e + q_e)`. The Poisson tensor is constant and pairs `p_e`
//! with `q_e`, so `s` is central.
//!
//! Polynomial kernels become [`ExpPoly`] values in the `3|E|` coordinates,
//! laid out as `[p.., q.., s..]`, and every operation on them is symbolic.
//! Opaque kernels are evaluated pointwise and differentiated numerically.

mod exppoly;
mod omega;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{Flavor, GroupElement, U1};
use crate::connections::{Connection, Links};
use crate::cylfn::{collect_terms, CylError, CylFunction, Density, Kernel, Side};
use crate::hoops::{BasedGraph, HoopWord};
use crate::triples::{checked_multiplicities, Orientation, TripleError, TripleField, TubeData};

pub use exppoly::{ExpPoly, Monomial};
pub use omega::{omega_matrix, omega_rank, symplectic_omega, TripleTangent};

/// Central-difference step of the numerical path.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("opaque kernel has no analytic derivative; use the finite-difference path")]
    NonDifferentiableKernel,
    #[error("not a trigonometric polynomial: {0}")]
    NotTrigPoly(String),
    #[error("invalid density: {0}")]
    BadDensity(String),
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected a {expected} function, got a {found} one")]
    WrongDependence { expected: Dependence, found: Dependence },
    #[error("objects live on different graphs")]
    GraphMismatch,
    #[error("invalid phase point: {0}")]
    InvalidPoint(String),
    #[error(transparent)]
    Cyl(#[from] CylError),
    #[error(transparent)]
    Triple(#[from] TripleError),
}

/// Which coordinate blocks a function depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dependence {
    pub p: bool,
    pub q: bool,
    pub s: bool,
}

impl Dependence {
    pub const CONSTANT: Dependence = Dependence { p: false, q: false, s: false };
    pub const P: Dependence = Dependence { p: true, q: false, s: false };
    pub const QS: Dependence = Dependence { p: false, q: true, s: true };

    pub fn union(self, other: Dependence) -> Dependence {
        Dependence { p: self.p || other.p, q: self.q || other.q, s: self.s || other.s }
    }

    pub fn is_p_only(self) -> bool {
        !self.q && !self.s
    }

    pub fn is_qs_only(self) -> bool {
        !self.p
    }

    pub fn is_mixed(self) -> bool {
        self.p && (self.q || self.s)
    }
}

impl fmt::Display for Dependence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Dependence::CONSTANT {
            return f.write_str("constant");
        }
        if self.is_mixed() {
            return f.write_str("mixed");
        }
        if self.p {
            return f.write_str("p-only");
        }
        match (self.q, self.s) {
            (true, true) => f.write_str("qs-only"),
            (true, false) => f.write_str("q-only"),
            _ => f.write_str("s-only"),
        }
    }
}

/// Coordinates `(p, q, s)` of one point of the phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    graph: Arc<BasedGraph>,
    coords: Vec<f64>,
    k_class: i64,
}

impl PhasePoint {
    pub fn new(graph: Arc<BasedGraph>, p: Vec<f64>, q: Vec<f64>, s: Vec<f64>, k_class: i64) -> Result<Self, PhaseError> {
        let n = graph.n_edges();
        for v in [&p, &q, &s] {
            if v.len() != n {
                return Err(PhaseError::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        let coords: Vec<f64> = p.into_iter().chain(q).chain(s).collect();
        Self::from_coords(graph, coords, k_class)
    }

    /// Builds a point from the flat layout `[p.., q.., s..]`.
    pub fn from_coords(graph: Arc<BasedGraph>, coords: Vec<f64>, k_class: i64) -> Result<Self, PhaseError> {
        let dim = 3 * graph.n_edges();
        if coords.len() != dim {
            return Err(PhaseError::DimensionMismatch { expected: dim, got: coords.len() });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(PhaseError::InvalidPoint("non-finite coordinate".into()));
        }
        Ok(PhasePoint { graph, coords, k_class })
    }

    /// `s_e = orient_e · area_e`, `q_e = flux_e`.
    pub fn from_parts(connection: &Connection, field: &TripleField) -> Result<Self, PhaseError> {
        if !same_graph(connection.graph(), field.graph()) {
            return Err(PhaseError::GraphMismatch);
        }
        let p: Vec<f64> = connection
            .u1_links()
            .map_err(|_| PhaseError::InvalidPoint("phase space connections are U(1)".into()))?
            .iter()
            .map(U1::theta)
            .collect();
        let q = field.tubes().iter().map(|t| t.flux).collect();
        let s = field.tubes().iter().map(|t| t.orient.sign() * t.area).collect();
        Self::new(field.graph().clone(), p, q, s, field.k_class())
    }

    /// Coordinates uniform in `[-range, range]`.
    pub fn random<R: Rng + ?Sized>(graph: Arc<BasedGraph>, range: f64, k_class: i64, rng: &mut R) -> Self {
        let coords = (0..3 * graph.n_edges()).map(|_| rng.random_range(-range..=range)).collect();
        PhasePoint { graph, coords, k_class }
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn p(&self) -> &[f64] {
        &self.coords[..self.n_edges()]
    }

    pub fn q(&self) -> &[f64] {
        let n = self.n_edges();
        &self.coords[n..2 * n]
    }

    pub fn s(&self) -> &[f64] {
        let n = self.n_edges();
        &self.coords[2 * n..]
    }

    pub fn k_class(&self) -> i64 {
        self.k_class
    }

    /// The U(1) connection with link angles `p_e`.
    pub fn to_connection(&self) -> Connection {
        let links = self.p().iter().map(|&x| U1::from_angle(x)).collect();
        Connection::new(self.graph.clone(), Links::U1(links)).expect("one link per edge")
    }

    /// The triple with `area_e = |s_e|`, `orient_e = sgn s_e`, `flux_e = q_e`;
    /// fails where `s_e = 0`.
    pub fn to_triple_field(&self) -> Result<TripleField, PhaseError> {
        let tubes = self
            .q()
            .iter()
            .zip(self.s())
            .map(|(&q, &s)| TubeData {
                area: s.abs(),
                flux: q,
                orient: if s < 0.0 { Orientation::Negative } else { Orientation::Positive },
            })
            .collect();
        Ok(TripleField::new(self.graph.clone(), tubes, self.k_class, false)?)
    }
}

/// A tangent vector `(δp, δq, δs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTangent {
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub ds: Vec<f64>,
}

impl PhaseTangent {
    pub fn new(dp: Vec<f64>, dq: Vec<f64>, ds: Vec<f64>) -> Result<Self, PhaseError> {
        if dq.len() != dp.len() || ds.len() != dp.len() {
            return Err(PhaseError::DimensionMismatch { expected: 3 * dp.len(), got: dp.len() + dq.len() + ds.len() });
        }
        Ok(PhaseTangent { dp, dq, ds })
    }

    pub fn dim(&self) -> usize {
        3 * self.dp.len()
    }

    /// The triple-space part `(u, w) = (δs, δq)`.
    pub fn triple_part(&self) -> TripleTangent {
        TripleTangent { u: self.ds.clone(), w: self.dq.clone() }
    }
}

/// A differential `(dF₁, dF₂, dF₃)` = partials in `p`, `q`, `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCovector {
    pub d1: Vec<Complex64>,
    pub d2: Vec<Complex64>,
    pub d3: Vec<Complex64>,
}

impl PhaseCovector {
    fn from_flat(flat: Vec<Complex64>, n: usize) -> Self {
        PhaseCovector { d1: flat[..n].to_vec(), d2: flat[n..2 * n].to_vec(), d3: flat[2 * n..].to_vec() }
    }

    pub fn apply(&self, t: &PhaseTangent) -> Result<Complex64, PhaseError> {
        if t.dim() != 3 * self.d1.len() {
            return Err(PhaseError::DimensionMismatch { expected: 3 * self.d1.len(), got: t.dim() });
        }
        let pair = |d: &[Complex64], v: &[f64]| d.iter().zip(v).map(|(a, b)| a * b).sum::<Complex64>();
        Ok(pair(&self.d1, &t.dp) + pair(&self.d2, &t.dq) + pair(&self.d3, &t.ds))
    }
}

pub type PhaseRule = dyn Fn(&[f64]) -> Complex64 + Send + Sync;

#[derive(Clone)]
enum Body {
    Symbolic(ExpPoly),
    /// A rule on the flat coordinates with its declared dependence.
    Opaque(Arc<PhaseRule>, Dependence),
}

impl fmt::Debug for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Symbolic(p) => f.debug_tuple("Symbolic").field(p).finish(),
            Body::Opaque(_, d) => f.debug_tuple("Opaque").field(d).finish(),
        }
    }
}

/// A function on the phase space, remembering the connection-side loops
/// and triple-side loops it was built from.
#[derive(Debug, Clone)]
pub struct PhaseFunction {
    graph: Arc<BasedGraph>,
    p_loops: Vec<HoopWord>,
    q_loops: Vec<HoopWord>,
    body: Body,
}

impl PhaseFunction {
    pub fn symbolic(graph: Arc<BasedGraph>, p_loops: Vec<HoopWord>, q_loops: Vec<HoopWord>, poly: ExpPoly) -> Result<Self, PhaseError> {
        let dim = 3 * graph.n_edges();
        if poly.n_vars() != dim {
            return Err(PhaseError::DimensionMismatch { expected: dim, got: poly.n_vars() });
        }
        Ok(PhaseFunction { graph, p_loops, q_loops, body: Body::Symbolic(poly) })
    }

    /// A pointwise rule on `[p.., q.., s..]`; only the numerical
    /// derivative path applies to it.
    pub fn opaque(graph: Arc<BasedGraph>, dependence: Dependence, rule: Arc<PhaseRule>) -> Self {
        PhaseFunction { graph, p_loops: Vec::new(), q_loops: Vec::new(), body: Body::Opaque(rule, dependence) }
    }

    pub fn constant(graph: Arc<BasedGraph>, c: Complex64) -> Self {
        let poly = ExpPoly::constant(3 * graph.n_edges(), c);
        PhaseFunction { graph, p_loops: Vec::new(), q_loops: Vec::new(), body: Body::Symbolic(poly) }
    }

    fn coordinate(graph: Arc<BasedGraph>, block: usize, edge: usize) -> Result<Self, PhaseError> {
        let n = graph.n_edges();
        if edge >= n {
            return Err(CylError::from(crate::connections::ConnectionError::UnknownEdge(edge)).into());
        }
        let poly = ExpPoly::variable(3 * n, block * n + edge);
        Ok(PhaseFunction { graph, p_loops: Vec::new(), q_loops: Vec::new(), body: Body::Symbolic(poly) })
    }

    /// The coordinate function `p_e` (0-based edge index).
    pub fn p_coord(graph: Arc<BasedGraph>, edge: usize) -> Result<Self, PhaseError> {
        Self::coordinate(graph, 0, edge)
    }

    pub fn q_coord(graph: Arc<BasedGraph>, edge: usize) -> Result<Self, PhaseError> {
        Self::coordinate(graph, 1, edge)
    }

    pub fn s_coord(graph: Arc<BasedGraph>, edge: usize) -> Result<Self, PhaseError> {
        Self::coordinate(graph, 2, edge)
    }

    /// `exp(i m x)` for the coordinate function `x`.
    fn coord_character(&self, m: i64) -> Result<PhaseFunction, PhaseError> {
        let poly = self.poly()?;
        let mut terms = poly.terms().iter();
        let (mono, _) = match (terms.next(), terms.next()) {
            (Some(t), None) => t,
            _ => return Err(PhaseError::NotTrigPoly("not a coordinate function".into())),
        };
        let j = mono.exps.iter().position(|&a| a == 1).ok_or_else(|| PhaseError::NotTrigPoly("not a coordinate function".into()))?;
        let mut freqs = vec![0; poly.n_vars()];
        freqs[j] = m;
        Ok(self.with_poly(ExpPoly::exp_i(freqs, Complex64::new(1.0, 0.0))))
    }

    /// `cos x` for a coordinate function `x`.
    pub fn cos_of(&self) -> Result<PhaseFunction, PhaseError> {
        let half = Complex64::new(0.5, 0.0);
        self.coord_character(1)?.scale(half).add(&self.coord_character(-1)?.scale(half))
    }

    /// `sin x` for a coordinate function `x`.
    pub fn sin_of(&self) -> Result<PhaseFunction, PhaseError> {
        let c = Complex64::new(0.0, -0.5);
        self.coord_character(1)?.scale(c).add(&self.coord_character(-1)?.scale(-c))
    }

    /// Lifts a cylindrical function with a U(1) kernel: connection-side
    /// functions depend on `p`, triple-side ones on `q + s`.
    pub fn from_cyl(f: &CylFunction) -> Result<Self, PhaseError> {
        let graph = f.graph().clone();
        let n = graph.n_edges();
        let loops = f.loops().to_vec();
        let (p_loops, q_loops) = match f.side() {
            Side::Connection => (loops, Vec::new()),
            Side::Triple => (Vec::new(), loops),
        };
        match f.kernel() {
            Kernel::Wilson(_) => Err(CylError::KernelMismatch("Wilson kernels need SU(2) links; phase space connections are U(1)".into()).into()),
            Kernel::Fourier(poly) => {
                let mut out = ExpPoly::zero(3 * n);
                for (k, c) in poly.edge_terms(f.loops(), n)? {
                    let mut freqs = vec![0i64; 3 * n];
                    match f.side() {
                        Side::Connection => freqs[..n].copy_from_slice(&k),
                        Side::Triple => {
                            freqs[n..2 * n].copy_from_slice(&k);
                            freqs[2 * n..].copy_from_slice(&k);
                        }
                    }
                    out.push(Monomial { exps: vec![0; 3 * n], freqs }, c);
                }
                Ok(PhaseFunction { graph, p_loops, q_loops, body: Body::Symbolic(out) })
            }
            Kernel::Opaque(k) => {
                if k.flavor != Flavor::U1 {
                    return Err(CylError::KernelMismatch("phase space connections are U(1)".into()).into());
                }
                let mult: Vec<Vec<i64>> =
                    f.loops().iter().map(|w| checked_multiplicities(w, n)).collect::<Result<_, _>>()?;
                let side = f.side();
                let rule = k.rule.clone();
                let eval = move |x: &[f64]| {
                    let values: Vec<GroupElement> = mult
                        .iter()
                        .map(|m| {
                            let angle: f64 = match side {
                                Side::Connection => m.iter().zip(&x[..n]).map(|(a, b)| *a as f64 * b).sum(),
                                Side::Triple => {
                                    m.iter().enumerate().map(|(e, a)| *a as f64 * (x[2 * n + e] + x[n + e])).sum()
                                }
                            };
                            GroupElement::U1(U1::from_angle(angle))
                        })
                        .collect();
                    rule(&values)
                };
                let dependence = match side {
                    Side::Connection => Dependence::P,
                    Side::Triple => Dependence::QS,
                };
                Ok(PhaseFunction { graph, p_loops, q_loops, body: Body::Opaque(Arc::new(eval), dependence) })
            }
        }
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn p_loops(&self) -> &[HoopWord] {
        &self.p_loops
    }

    pub fn q_loops(&self) -> &[HoopWord] {
        &self.q_loops
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self.body, Body::Symbolic(_))
    }

    /// The symbolic form, or `NotTrigPoly` for opaque functions.
    pub fn poly(&self) -> Result<&ExpPoly, PhaseError> {
        match &self.body {
            Body::Symbolic(p) => Ok(p),
            Body::Opaque(..) => Err(PhaseError::NotTrigPoly("opaque kernel".into())),
        }
    }

    /// Read off the symbolic terms; declared for opaque functions.
    pub fn dependence(&self) -> Dependence {
        match &self.body {
            Body::Symbolic(p) => {
                let n = self.graph.n_edges();
                let block = |b: usize| (b * n..(b + 1) * n).any(|j| p.uses_var(j));
                Dependence { p: block(0), q: block(1), s: block(2) }
            }
            Body::Opaque(_, d) => *d,
        }
    }

    fn with_poly(&self, poly: ExpPoly) -> PhaseFunction {
        PhaseFunction {
            graph: self.graph.clone(),
            p_loops: self.p_loops.clone(),
            q_loops: self.q_loops.clone(),
            body: Body::Symbolic(poly),
        }
    }

    fn combine(&self, other: &PhaseFunction, sym: impl Fn(&ExpPoly, &ExpPoly) -> ExpPoly, num: fn(Complex64, Complex64) -> Complex64) -> Result<PhaseFunction, PhaseError> {
        if !same_graph(&self.graph, &other.graph) {
            return Err(PhaseError::GraphMismatch);
        }
        let body = match (&self.body, &other.body) {
            (Body::Symbolic(a), Body::Symbolic(b)) => Body::Symbolic(sym(a, b)),
            _ => {
                let (a, b) = (self.clone(), other.clone());
                let dependence = self.dependence().union(other.dependence());
                Body::Opaque(Arc::new(move |x: &[f64]| num(a.eval_coords(x), b.eval_coords(x))), dependence)
            }
        };
        Ok(PhaseFunction {
            graph: self.graph.clone(),
            p_loops: loop_union(&self.p_loops, &other.p_loops),
            q_loops: loop_union(&self.q_loops, &other.q_loops),
            body,
        })
    }

    pub fn add(&self, other: &PhaseFunction) -> Result<PhaseFunction, PhaseError> {
        self.combine(other, |a, b| a + b, |x, y| x + y)
    }

    pub fn mul(&self, other: &PhaseFunction) -> Result<PhaseFunction, PhaseError> {
        self.combine(other, |a, b| a * b, |x, y| x * y)
    }

    pub fn scale(&self, c: Complex64) -> PhaseFunction {
        match &self.body {
            Body::Symbolic(p) => self.with_poly(p.scale(c)),
            Body::Opaque(rule, d) => {
                let rule = rule.clone();
                PhaseFunction { body: Body::Opaque(Arc::new(move |x: &[f64]| c * rule(x)), *d), ..self.clone() }
            }
        }
    }

    fn eval_coords(&self, x: &[f64]) -> Complex64 {
        match &self.body {
            Body::Symbolic(p) => p.eval(x),
            Body::Opaque(rule, _) => rule(x),
        }
    }

    pub fn eval(&self, at: &PhasePoint) -> Result<Complex64, PhaseError> {
        if !same_graph(&self.graph, &at.graph) {
            return Err(PhaseError::GraphMismatch);
        }
        Ok(self.eval_coords(&at.coords))
    }
}

fn same_graph(a: &Arc<BasedGraph>, b: &Arc<BasedGraph>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Order-preserving union of two loop lists.
fn loop_union(a: &[HoopWord], b: &[HoopWord]) -> Vec<HoopWord> {
    let mut out = a.to_vec();
    for w in b {
        if !out.contains(w) {
            out.push(w.clone());
        }
    }
    out
}

/// How partial derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Differentiation {
    Analytic,
    /// Central differences with step `h`.
    Central { h: f64 },
}

/// `(dF₁, dF₂, dF₃)` at a point.
pub fn gradient(f: &PhaseFunction, at: &PhasePoint, how: Differentiation) -> Result<PhaseCovector, PhaseError> {
    if !same_graph(&f.graph, &at.graph) {
        return Err(PhaseError::GraphMismatch);
    }
    let n = at.n_edges();
    let flat = match (how, &f.body) {
        (Differentiation::Analytic, Body::Symbolic(p)) => p.gradient(&at.coords),
        (Differentiation::Analytic, Body::Opaque(..)) => return Err(PhaseError::NonDifferentiableKernel),
        (Differentiation::Central { h }, _) => {
            let mut x = at.coords.clone();
            (0..3 * n)
                .map(|j| {
                    let x0 = x[j];
                    x[j] = x0 + h;
                    let up = f.eval_coords(&x);
                    x[j] = x0 - h;
                    let down = f.eval_coords(&x);
                    x[j] = x0;
                    (up - down) / (2.0 * h)
                })
                .collect()
        }
    };
    Ok(PhaseCovector::from_flat(flat, n))
}

/// `Σ_e (∂F/∂p_e ∂G/∂q_e − ∂G/∂p_e ∂F/∂q_e)`.
pub fn poisson_bracket(f: &PhaseFunction, g: &PhaseFunction, at: &PhasePoint, how: Differentiation) -> Result<Complex64, PhaseError> {
    let df = gradient(f, at, how)?;
    let dg = gradient(g, at, how)?;
    Ok(pair_gradients(&df, &dg))
}

fn pair_gradients(df: &PhaseCovector, dg: &PhaseCovector) -> Complex64 {
    (0..df.d1.len()).map(|e| df.d1[e] * dg.d2[e] - dg.d1[e] * df.d2[e]).sum()
}

/// Brackets at many points in parallel.
pub fn poisson_bracket_batch(
    f: &PhaseFunction,
    g: &PhaseFunction,
    points: &[PhasePoint],
    how: Differentiation,
) -> Result<Vec<Complex64>, PhaseError> {
    points.par_iter().map(|x| poisson_bracket(f, g, x, how)).collect()
}

/// The bracket as a symbolic function; its loop lists are the unions of
/// the inputs'.
pub fn bracket_symbolic(f: &PhaseFunction, g: &PhaseFunction) -> Result<PhaseFunction, PhaseError> {
    if !same_graph(&f.graph, &g.graph) {
        return Err(PhaseError::GraphMismatch);
    }
    let (a, b) = (f.poly()?, g.poly()?);
    let n = f.graph.n_edges();
    let mut out = ExpPoly::zero(3 * n);
    for e in 0..n {
        let (ap, aq) = (a.derivative(e), a.derivative(n + e));
        let (bp, bq) = (b.derivative(e), b.derivative(n + e));
        if (ap.is_zero() || bq.is_zero()) && (bp.is_zero() || aq.is_zero()) {
            continue;
        }
        out = &out + &(&(&ap * &bq) - &(&bp * &aq));
    }
    Ok(PhaseFunction {
        graph: f.graph.clone(),
        p_loops: loop_union(&f.p_loops, &g.p_loops),
        q_loops: loop_union(&f.q_loops, &g.q_loops),
        body: Body::Symbolic(out),
    })
}

/// `{F, G}` for a connection-side `F` and a triple-side `G`, as a mixed
/// function on the union of their loops.
pub fn bracket_as_cyl(f: &PhaseFunction, g: &PhaseFunction) -> Result<PhaseFunction, PhaseError> {
    f.poly()?;
    g.poly()?;
    if !f.dependence().is_p_only() {
        return Err(PhaseError::WrongDependence { expected: Dependence::P, found: f.dependence() });
    }
    if !g.dependence().is_qs_only() {
        return Err(PhaseError::WrongDependence { expected: Dependence::QS, found: g.dependence() });
    }
    bracket_symbolic(f, g)
}

/// `{F,{G,H}} + {G,{H,F}} + {H,{F,G}}` at a point.
pub fn jacobi_sum(f: &PhaseFunction, g: &PhaseFunction, h: &PhaseFunction, at: &PhasePoint) -> Result<Complex64, PhaseError> {
    let a = Differentiation::Analytic;
    Ok(poisson_bracket(f, &bracket_symbolic(g, h)?, at, a)?
        + poisson_bracket(g, &bracket_symbolic(h, f)?, at, a)?
        + poisson_bracket(h, &bracket_symbolic(f, g)?, at, a)?)
}

/// `N_F(f) = ∫ {f, F} ρ dμ` over the triple side, with the triple
/// variables entering through the per-edge phases `φ_e = s_e + q_e`.
/// The result depends on `p` only; its connection-side loop list is the
/// union of both inputs' loops.
pub fn derivation_nf(big_f: &PhaseFunction, f: &PhaseFunction, density: &Density) -> Result<PhaseFunction, PhaseError> {
    if !f.dependence().is_p_only() {
        return Err(PhaseError::WrongDependence { expected: Dependence::P, found: f.dependence() });
    }
    if !big_f.dependence().is_qs_only() {
        return Err(PhaseError::WrongDependence { expected: Dependence::QS, found: big_f.dependence() });
    }
    if !same_graph(density.graph(), &f.graph) {
        return Err(PhaseError::BadDensity("density lives on a different graph".into()));
    }
    let n = f.graph.n_edges();
    let bracket = bracket_symbolic(f, big_f)?;
    let weights = collect_terms(density.edge_terms());
    let mut out = ExpPoly::zero(3 * n);
    for (m, c) in bracket.poly()?.terms() {
        if m.exps[n..].iter().any(|&a| a != 0) {
            return Err(PhaseError::NotTrigPoly("polynomial dependence on triple coordinates".into()));
        }
        let (kq, ks) = (&m.freqs[n..2 * n], &m.freqs[2 * n..]);
        if kq != ks {
            return Err(PhaseError::NotTrigPoly("triple dependence is not through s + q".into()));
        }
        let neg: Vec<i64> = kq.iter().map(|k| -k).collect();
        if let Some(w) = weights.get(&neg) {
            let mut p_part = m.clone();
            p_part.freqs[n..].iter_mut().for_each(|k| *k = 0);
            out.push(p_part, c * w);
        }
    }
    Ok(PhaseFunction {
        graph: f.graph.clone(),
        p_loops: loop_union(&f.p_loops, &big_f.q_loops),
        q_loops: Vec::new(),
        body: Body::Symbolic(out),
    })
}

/// Random mixed functions for property checks.
pub mod random {
    use super::*;
    use crate::cylfn::random::fourier_function;

    /// `f_p · g_qs + h` built from random connection-side and triple-side
    /// Fourier functions on `n_loops` loops each.
    pub fn mixed_function<R: Rng + ?Sized>(graph: &Arc<BasedGraph>, rng: &mut R, n_loops: usize, loop_steps: usize, n_terms: usize, max_mode: i64) -> PhaseFunction {
        let mut part = |side| {
            PhaseFunction::from_cyl(&fourier_function(graph, side, rng, n_loops, loop_steps, n_terms, max_mode))
                .expect("Fourier kernels lift")
        };
        let a = part(Side::Connection);
        let b = part(Side::Triple);
        let c = part(Side::Triple);
        a.mul(&b).and_then(|ab| ab.add(&c)).expect("same graph")
    }

    /// A connection-side Fourier function lifted to the phase space.
    pub fn p_function<R: Rng + ?Sized>(graph: &Arc<BasedGraph>, rng: &mut R, n_loops: usize, loop_steps: usize, n_terms: usize, max_mode: i64) -> PhaseFunction {
        PhaseFunction::from_cyl(&fourier_function(graph, Side::Connection, rng, n_loops, loop_steps, n_terms, max_mode)).expect("Fourier kernels lift")
    }

    /// A triple-side Fourier function lifted to the phase space.
    pub fn qs_function<R: Rng + ?Sized>(graph: &Arc<BasedGraph>, rng: &mut R, n_loops: usize, loop_steps: usize, n_terms: usize, max_mode: i64) -> PhaseFunction {
        PhaseFunction::from_cyl(&fourier_function(graph, Side::Triple, rng, n_loops, loop_steps, n_terms, max_mode)).expect("Fourier kernels lift")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::RngStream;
    use crate::cylfn::{eval_cyl, CylPoint, FourierMonomial, FourierPoly};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn rose(n: usize) -> Arc<BasedGraph> {
        Arc::new(BasedGraph::from_indices(1, &vec![(0, 0); n], 0).unwrap())
    }

    fn point(g: &Arc<BasedGraph>, p: &[f64], q: &[f64], s: &[f64]) -> PhasePoint {
        PhasePoint::new(g.clone(), p.to_vec(), q.to_vec(), s.to_vec(), 0).unwrap()
    }

    #[test]
    fn coordinate_gradients() {
        let g = rose(2);
        let x = point(&g, &[0.3, -0.2], &[1.0, 2.0], &[0.5, -0.5]);
        let d = gradient(&PhaseFunction::p_coord(g.clone(), 0).unwrap(), &x, Differentiation::Analytic).unwrap();
        assert_eq!(d.d1, vec![one(), Complex64::new(0.0, 0.0)]);
        assert!(d.d2.iter().chain(&d.d3).all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn character_gradient_is_multiplicity_times_i() {
        let g = rose(3);
        let beta = g.parse_word("e1 e2 e1 e3^-1").unwrap();
        let f = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Triple, beta.clone(), 1).unwrap()).unwrap();
        let mut rng = RngStream::new(4, 0);
        let x = PhasePoint::random(g.clone(), 3.0, 0, &mut rng);
        let v = f.eval(&x).unwrap();
        let d = gradient(&f, &x, Differentiation::Analytic).unwrap();
        for (e, n) in beta.multiplicities(3).into_iter().enumerate() {
            assert!((d.d2[e] - Complex64::new(0.0, n as f64) * v).norm() < 1e-14);
            assert!((d.d3[e] - d.d2[e]).norm() < 1e-14);
            assert_eq!(d.d1[e], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn canonical_pair_and_center() {
        let g = rose(2);
        let mut rng = RngStream::new(5, 0);
        let p1 = PhaseFunction::p_coord(g.clone(), 0).unwrap();
        let q1 = PhaseFunction::q_coord(g.clone(), 0).unwrap();
        let s1 = PhaseFunction::s_coord(g.clone(), 0).unwrap();
        for _ in 0..20 {
            let x = PhasePoint::random(g.clone(), 5.0, 0, &mut rng);
            assert_eq!(poisson_bracket(&p1, &q1, &x, Differentiation::Analytic).unwrap(), one());
            assert_eq!(poisson_bracket(&p1, &s1, &x, Differentiation::Analytic).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn sin_cos_example() {
        let g = rose(1);
        let f = PhaseFunction::p_coord(g.clone(), 0).unwrap().sin_of().unwrap();
        let h = PhaseFunction::q_coord(g.clone(), 0).unwrap().cos_of().unwrap();
        let x = point(&g, &[0.0], &[FRAC_PI_2], &[0.7]);
        let b = poisson_bracket(&f, &h, &x, Differentiation::Analytic).unwrap();
        assert!((b - Complex64::new(-1.0, 0.0)).norm() < 1e-15, "{b}");
        let fd = poisson_bracket(&f, &h, &x, Differentiation::Central { h: FD_STEP }).unwrap();
        assert!((fd - b).norm() < 1e-9);
    }

    #[test]
    fn opaque_needs_finite_differences() {
        let g = rose(1);
        let f = PhaseFunction::opaque(g.clone(), Dependence::P, Arc::new(|x: &[f64]| Complex64::new(x[0].sin(), 0.0)));
        let x = point(&g, &[0.4], &[0.0], &[1.0]);
        assert_eq!(gradient(&f, &x, Differentiation::Analytic).unwrap_err(), PhaseError::NonDifferentiableKernel);
        let d = gradient(&f, &x, Differentiation::Central { h: FD_STEP }).unwrap();
        assert!((d.d1[0].re - 0.4f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn lifted_functions_match_cylindrical_evaluation() {
        let mut rng = RngStream::new(6, 0);
        for _ in 0..50 {
            let g = Arc::new(BasedGraph::random(&mut rng, 6));
            for side in [Side::Connection, Side::Triple] {
                let f = crate::cylfn::random::fourier_function(&g, side, &mut rng, 2, 5, 3, 2);
                let lifted = PhaseFunction::from_cyl(&f).unwrap();
                let mut x = PhasePoint::random(g.clone(), 2.0, 3, &mut rng);
                // keep s away from zero so the triple decodes
                let n = g.n_edges();
                x.coords[2 * n..].iter_mut().for_each(|s| *s = if *s < 0.0 { *s - 0.1 } else { *s + 0.1 });
                let want = match side {
                    Side::Connection => eval_cyl(&f, CylPoint::Connection(&x.to_connection())).unwrap(),
                    Side::Triple => eval_cyl(&f, CylPoint::Triple(&x.to_triple_field().unwrap())).unwrap(),
                };
                assert!((lifted.eval(&x).unwrap() - want).norm() < 1e-12);
                let dep = lifted.dependence();
                assert!(match side {
                    Side::Connection => dep.is_p_only(),
                    Side::Triple => dep.is_qs_only(),
                });
            }
        }
    }

    #[test]
    fn point_round_trip_through_parts() {
        let g = rose(2);
        let x = point(&g, &[0.5, 1.5], &[-0.3, 0.2], &[0.8, -1.1]);
        let back = PhasePoint::from_parts(&x.to_connection(), &x.to_triple_field().unwrap()).unwrap();
        for (a, b) in x.coords().iter().zip(back.coords()) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero_s = point(&g, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]);
        assert!(matches!(zero_s.to_triple_field(), Err(PhaseError::Triple(TripleError::NonPositiveArea { .. }))));
        assert!(matches!(
            PhasePoint::new(g, vec![0.0], vec![0.0; 2], vec![0.0; 2], 0),
            Err(PhaseError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn disjoint_loops_bracket_to_zero() {
        let g = rose(2);
        let f = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Connection, g.parse_word("e1").unwrap(), 1).unwrap()).unwrap();
        let h = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Triple, g.parse_word("e2").unwrap(), 1).unwrap()).unwrap();
        let b = bracket_as_cyl(&f, &h).unwrap();
        assert!(b.poly().unwrap().is_zero());
        assert_eq!(b.p_loops(), f.p_loops());
        assert_eq!(b.q_loops(), h.q_loops());
    }

    #[test]
    fn shared_edge_bracket_is_minus_product() {
        let g = rose(1);
        let w = g.parse_word("e1").unwrap();
        let f = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Connection, w.clone(), 1).unwrap()).unwrap();
        let h = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Triple, w, 1).unwrap()).unwrap();
        let b = bracket_as_cyl(&f, &h).unwrap();
        let mut rng = RngStream::new(8, 0);
        for _ in 0..100 {
            let x = PhasePoint::random(g.clone(), 4.0, 0, &mut rng);
            let want = -f.eval(&x).unwrap() * h.eval(&x).unwrap();
            assert!((b.eval(&x).unwrap() - want).norm() < 1e-12);
            assert!((poisson_bracket(&f, &h, &x, Differentiation::Analytic).unwrap() - want).norm() < 1e-12);
        }
        assert!(matches!(bracket_as_cyl(&h, &f), Err(PhaseError::WrongDependence { .. })));
    }

    #[test]
    fn antisymmetry_is_exact() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..50 {
            let g = Arc::new(BasedGraph::random(&mut rng, 5));
            let f = random::mixed_function(&g, &mut rng, 2, 4, 2, 2);
            let h = random::mixed_function(&g, &mut rng, 2, 4, 2, 2);
            let x = PhasePoint::random(g.clone(), 3.0, 0, &mut rng);
            let a = poisson_bracket(&f, &h, &x, Differentiation::Analytic).unwrap();
            let b = poisson_bracket(&h, &f, &x, Differentiation::Analytic).unwrap();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn jacobi_on_random_mixed_functions() {
        let mut rng = RngStream::new(10, 0);
        for _ in 0..30 {
            let g = Arc::new(BasedGraph::random(&mut rng, 4));
            let fs: Vec<PhaseFunction> = (0..3).map(|_| random::mixed_function(&g, &mut rng, 2, 4, 2, 2)).collect();
            let x = PhasePoint::random(g.clone(), 3.0, 0, &mut rng);
            let j = jacobi_sum(&fs[0], &fs[1], &fs[2], &x).unwrap();
            assert!(j.norm() < 1e-8, "{j}");
        }
    }

    #[test]
    fn uniform_density_kills_the_derivation() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..30 {
            let g = Arc::new(BasedGraph::random(&mut rng, 5));
            let big_f = random::qs_function(&g, &mut rng, 2, 4, 3, 2);
            let f = random::p_function(&g, &mut rng, 2, 4, 3, 2);
            let nf = derivation_nf(&big_f, &f, &Density::uniform(g.clone())).unwrap();
            assert!(nf.poly().unwrap().is_zero());
        }
    }

    /// `ρ = 1 + cos θ_{e1}`, `F = exp(iθ_{e1})`, `f = exp(i p_{e1})`:
    /// `{f, F} = −f F`, and `∫ e^{iφ} (1 + cos φ) dφ/2π = ½`, so `N_F f = −½ f`.
    #[test]
    fn cosine_density_example() {
        let g = rose(2);
        let w = g.parse_word("e1").unwrap();
        let half = Complex64::new(0.5, 0.0);
        let rho = Density::new(
            g.clone(),
            vec![w.clone()],
            FourierPoly {
                terms: vec![
                    FourierMonomial { coeff: one(), modes: vec![0] },
                    FourierMonomial { coeff: half, modes: vec![1] },
                    FourierMonomial { coeff: half, modes: vec![-1] },
                ],
            },
        )
        .unwrap();
        let f = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Connection, w.clone(), 1).unwrap()).unwrap();
        let big_f = PhaseFunction::from_cyl(&CylFunction::character(g.clone(), Side::Triple, w.clone(), 1).unwrap()).unwrap();
        let nf = derivation_nf(&big_f, &f, &rho).unwrap();
        assert!(nf.dependence().is_p_only());
        assert!(nf.poly().unwrap().max_coeff_diff(&f.poly().unwrap().scale(-half)) < 1e-15);

        // midpoint quadrature of the bracket against ρ
        let mut rng = RngStream::new(12, 0);
        let x = PhasePoint::random(g.clone(), 2.0, 0, &mut rng);
        let m = 64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let phi = (i as f64 + 0.5) * TAU / m as f64;
            let y = point(&g, x.p(), &[phi, 0.0], &[0.0, 0.0]);
            acc += poisson_bracket(&f, &big_f, &y, Differentiation::Analytic).unwrap() * (1.0 + phi.cos());
        }
        acc /= m as f64;
        assert!((acc - nf.eval(&x).unwrap()).norm() < 1e-12, "{acc}");
    }

    #[test]
    fn derivation_obeys_leibniz() {
        let mut rng = RngStream::new(13, 0);
        let g = Arc::new(BasedGraph::random(&mut rng, 4));
        let w = g.random_loop(&mut rng, 4);
        let rho = Density::new(
            g.clone(),
            vec![w],
            FourierPoly {
                terms: vec![
                    FourierMonomial { coeff: one(), modes: vec![0] },
                    FourierMonomial { coeff: Complex64::new(0.25, 0.1), modes: vec![1] },
                    FourierMonomial { coeff: Complex64::new(0.25, -0.1), modes: vec![-1] },
                ],
            },
        )
        .unwrap();
        for _ in 0..20 {
            let big_f = random::qs_function(&g, &mut rng, 2, 4, 3, 2);
            let f1 = random::p_function(&g, &mut rng, 2, 4, 3, 2);
            let f2 = random::p_function(&g, &mut rng, 2, 4, 3, 2);
            let lhs = derivation_nf(&big_f, &f1.mul(&f2).unwrap(), &rho).unwrap();
            let rhs = f1
                .mul(&derivation_nf(&big_f, &f2, &rho).unwrap())
                .unwrap()
                .add(&derivation_nf(&big_f, &f1, &rho).unwrap().mul(&f2).unwrap())
                .unwrap();
            assert!(lhs.poly().unwrap().max_coeff_diff(rhs.poly().unwrap()) < 1e-12);
        }
    }

    #[test]
    fn derivation_rejects_polynomial_triple_dependence() {
        let g = rose(1);
        let f = PhaseFunction::p_coord(g.clone(), 0).unwrap();
        let q = PhaseFunction::q_coord(g.clone(), 0).unwrap();
        let big_f = q.mul(&q).unwrap();
        assert!(matches!(derivation_nf(&big_f, &f, &Density::uniform(g)), Err(PhaseError::NotTrigPoly(_))));
    }
}
