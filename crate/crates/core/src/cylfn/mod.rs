//! Cylindrical functions on the connection and triple sides, and their
//! integration against the graph-level product Haar measure.
//!
//! A cylindrical function is a kernel applied to the projection of a point
//! onto finitely many loops: holonomies in `SU(2)^n` (or `U(1)^n`) on the
//! connection side, the phases `P_α` in `U(1)^n` on the triple side.

mod exact;
mod sampling;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::algebra::{Flavor, GroupElement, RngStream, U1};
use crate::connections::{holonomy, Connection, ConnectionError, HolonomyAlgebraElement};
use crate::hoops::{subdivide_edge, BasedGraph, EdgeId, HoopError, HoopWord, Relabeling};
use crate::triples::{checked_multiplicities, triple_phase, TripleError, TripleField};

pub use exact::{integrate_exact, ExactBudget};
pub use sampling::{integrate_cyl, Integral, IntegrationOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CylError {
    #[error("function lives on the {expected} side but was given a {found} point")]
    SideMismatch { expected: Side, found: Side },
    #[error("kernel does not fit the function: {0}")]
    KernelMismatch(String),
    #[error("kernel term has {got} exponents for {loops} loops")]
    ArityMismatch { loops: usize, got: usize },
    #[error("kernel coefficient is not finite")]
    NonFiniteCoefficient,
    #[error("at least 2 samples are needed for a standard error, got {0}")]
    TooFewSamples(usize),
    #[error("exact path unavailable: {0}")]
    ExactUnavailable(String),
    #[error("invalid density: {0}")]
    BadDensity(String),
    #[error("objects live on different graphs")]
    GraphMismatch,
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error(transparent)]
    Triple(#[from] TripleError),
    #[error(transparent)]
    Hoop(#[from] HoopError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Connection,
    Triple,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Connection => f.write_str("connection"),
            Side::Triple => f.write_str("triple"),
        }
    }
}

/// `c · Π_j T_{α_j}^{k_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WilsonMonomial {
    pub coeff: Complex64,
    pub powers: Vec<u32>,
}

/// Polynomial in the Wilson functions of the loop list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WilsonPoly {
    pub terms: Vec<WilsonMonomial>,
}

impl WilsonPoly {
    pub fn eval(&self, half_traces: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let v: f64 = t.powers.iter().zip(half_traces).map(|(&k, &x)| x.powi(k as i32)).product();
                t.coeff * v
            })
            .sum()
    }

    /// The same function as an element of the holonomy algebra.
    pub fn to_algebra(&self, loops: &[HoopWord]) -> HolonomyAlgebraElement {
        let mut out = HolonomyAlgebraElement::zero();
        for t in &self.terms {
            let factors = t
                .powers
                .iter()
                .zip(loops)
                .flat_map(|(&k, w)| std::iter::repeat_n(w.clone(), k as usize))
                .collect();
            out = out + HolonomyAlgebraElement::product(t.coeff, factors);
        }
        out
    }
}

/// `c · exp(i Σ_j m_j θ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMonomial {
    pub coeff: Complex64,
    pub modes: Vec<i64>,
}

/// Trigonometric polynomial on `U(1)^n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FourierPoly {
    pub terms: Vec<FourierMonomial>,
}

impl FourierPoly {
    pub fn eval(&self, angles: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let phase: f64 = t.modes.iter().zip(angles).map(|(&m, &a)| m as f64 * a).sum();
                t.coeff * Complex64::from_polar(1.0, phase)
            })
            .sum()
    }

    /// Rewrites each monomial in per-edge frequencies
    /// `k_e = Σ_j m_j n_{α_j}(e)`, preserving term order.
    pub fn edge_terms(&self, loops: &[HoopWord], n_edges: usize) -> Result<Vec<(Vec<i64>, Complex64)>, CylError> {
        let mult: Vec<Vec<i64>> =
            loops.iter().map(|w| checked_multiplicities(w, n_edges)).collect::<Result<_, _>>()?;
        Ok(self
            .terms
            .iter()
            .map(|t| {
                let mut k = vec![0i64; n_edges];
                for (m, n) in t.modes.iter().zip(&mult) {
                    for (ke, ne) in k.iter_mut().zip(n) {
                        *ke += m * ne;
                    }
                }
                (k, t.coeff)
            })
            .collect())
    }
}

pub type OpaqueFn = dyn Fn(&[GroupElement]) -> Complex64 + Send + Sync;

/// A bounded evaluation rule on the projected tuple.
#[derive(Clone)]
pub struct OpaqueKernel {
    pub flavor: Flavor,
    pub bound: f64,
    pub rule: Arc<OpaqueFn>,
}

impl fmt::Debug for OpaqueKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpaqueKernel").field("flavor", &self.flavor).field("bound", &self.bound).finish()
    }
}

#[derive(Debug, Clone)]
pub enum Kernel {
    /// Polynomial in `½ Tr` of SU(2) holonomies.
    Wilson(WilsonPoly),
    /// Trigonometric polynomial in U(1) angles.
    Fourier(FourierPoly),
    Opaque(OpaqueKernel),
}

impl Kernel {
    pub fn is_trig_poly(&self) -> bool {
        !matches!(self, Kernel::Opaque(_))
    }

    /// Structure group of the projected tuple.
    pub fn flavor(&self) -> Flavor {
        match self {
            Kernel::Wilson(_) => Flavor::Su2,
            Kernel::Fourier(_) => Flavor::U1,
            Kernel::Opaque(k) => k.flavor,
        }
    }
}

/// A function factoring through finitely many loop projections.
#[derive(Debug, Clone)]
pub struct CylFunction {
    graph: Arc<BasedGraph>,
    side: Side,
    loops: Vec<HoopWord>,
    kernel: Kernel,
}

impl CylFunction {
    pub fn new(graph: Arc<BasedGraph>, side: Side, loops: Vec<HoopWord>, kernel: Kernel) -> Result<Self, CylError> {
        for w in &loops {
            w.validate(&graph)?;
        }
        let n = loops.len();
        let arity_ok = |len: usize| if len == n { Ok(()) } else { Err(CylError::ArityMismatch { loops: n, got: len }) };
        match &kernel {
            Kernel::Wilson(p) => {
                if side == Side::Triple {
                    return Err(CylError::KernelMismatch("triple side projects to U(1); Wilson kernels need SU(2)".into()));
                }
                for t in &p.terms {
                    arity_ok(t.powers.len())?;
                    finite(t.coeff)?;
                }
            }
            Kernel::Fourier(p) => {
                for t in &p.terms {
                    arity_ok(t.modes.len())?;
                    finite(t.coeff)?;
                }
            }
            Kernel::Opaque(k) => {
                if side == Side::Triple && k.flavor != Flavor::U1 {
                    return Err(CylError::KernelMismatch("triple side projects to U(1)".into()));
                }
                if !(k.bound.is_finite() && k.bound >= 0.0) {
                    return Err(CylError::KernelMismatch("opaque kernel needs a finite bound".into()));
                }
            }
        }
        Ok(CylFunction { graph, side, loops, kernel })
    }

    /// The constant function `c`.
    pub fn constant(graph: Arc<BasedGraph>, side: Side, c: Complex64) -> Self {
        let kernel = match side {
            Side::Connection => Kernel::Wilson(WilsonPoly { terms: vec![WilsonMonomial { coeff: c, powers: vec![] }] }),
            Side::Triple => Kernel::Fourier(FourierPoly { terms: vec![FourierMonomial { coeff: c, modes: vec![] }] }),
        };
        CylFunction { graph, side, loops: Vec::new(), kernel }
    }

    /// `T_α^k` on the connection side.
    pub fn wilson_power(graph: Arc<BasedGraph>, word: HoopWord, k: u32) -> Result<Self, CylError> {
        let kernel = Kernel::Wilson(WilsonPoly {
            terms: vec![WilsonMonomial { coeff: Complex64::new(1.0, 0.0), powers: vec![k] }],
        });
        CylFunction::new(graph, Side::Connection, vec![word], kernel)
    }

    /// `exp(i m θ_α)` on the chosen side.
    pub fn character(graph: Arc<BasedGraph>, side: Side, word: HoopWord, m: i64) -> Result<Self, CylError> {
        let kernel = Kernel::Fourier(FourierPoly {
            terms: vec![FourierMonomial { coeff: Complex64::new(1.0, 0.0), modes: vec![m] }],
        });
        CylFunction::new(graph, side, vec![word], kernel)
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn loops(&self) -> &[HoopWord] {
        &self.loops
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `Σ |c|` for polynomial kernels, the declared bound otherwise.
    pub fn bound(&self) -> f64 {
        match &self.kernel {
            Kernel::Wilson(p) => p.terms.iter().map(|t| t.coeff.norm()).sum(),
            Kernel::Fourier(p) => p.terms.iter().map(|t| t.coeff.norm()).sum(),
            Kernel::Opaque(k) => k.bound,
        }
    }

    /// The same function on a refined graph.
    pub fn rewrite_subdivided(&self, refined: Arc<BasedGraph>, sub: &crate::hoops::Subdivision) -> CylFunction {
        CylFunction {
            graph: refined,
            side: self.side,
            loops: self.loops.iter().map(|w| sub.rewrite(w)).collect(),
            kernel: self.kernel.clone(),
        }
    }

    /// The same function on a relabeled copy of the graph.
    pub fn relabel(&self, relabeled: Arc<BasedGraph>, map: &Relabeling) -> CylFunction {
        CylFunction {
            graph: relabeled,
            side: self.side,
            loops: self.loops.iter().map(|w| map.rewrite(w)).collect(),
            kernel: self.kernel.clone(),
        }
    }

    /// Evaluates the kernel on already-projected values.
    pub(crate) fn eval_projected(&self, values: &[GroupElement]) -> Result<Complex64, CylError> {
        Ok(match &self.kernel {
            Kernel::Wilson(p) => {
                let t: Vec<f64> = values
                    .iter()
                    .map(|g| g.as_su2().map(|u| 0.5 * u.trace()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| CylError::KernelMismatch("Wilson kernel on U(1) values".into()))?;
                p.eval(&t)
            }
            Kernel::Fourier(p) => {
                let a: Vec<f64> = values
                    .iter()
                    .map(|g| g.as_u1().map(|u| u.theta()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| CylError::KernelMismatch("Fourier kernel on SU(2) values".into()))?;
                p.eval(&a)
            }
            Kernel::Opaque(k) => (k.rule)(values),
        })
    }
}

fn finite(c: Complex64) -> Result<(), CylError> {
    if c.re.is_finite() && c.im.is_finite() {
        Ok(())
    } else {
        Err(CylError::NonFiniteCoefficient)
    }
}

/// A point of either configuration space.
#[derive(Debug, Clone, Copy)]
pub enum CylPoint<'a> {
    Connection(&'a Connection),
    Triple(&'a TripleField),
}

impl CylPoint<'_> {
    pub fn side(&self) -> Side {
        match self {
            CylPoint::Connection(_) => Side::Connection,
            CylPoint::Triple(_) => Side::Triple,
        }
    }
}

/// Holonomies around each loop.
pub fn project_connection(a: &Connection, loops: &[HoopWord]) -> Result<Vec<GroupElement>, CylError> {
    loops.iter().map(|w| holonomy(a, w).map_err(CylError::from)).collect()
}

pub fn eval_cyl(f: &CylFunction, point: CylPoint<'_>) -> Result<Complex64, CylError> {
    if point.side() != f.side {
        return Err(CylError::SideMismatch { expected: f.side, found: point.side() });
    }
    let values: Vec<GroupElement> = match point {
        CylPoint::Connection(a) => {
            if a.flavor() != f.kernel.flavor() {
                return Err(ConnectionError::FlavorMismatch { expected: f.kernel.flavor(), found: a.flavor() }.into());
            }
            project_connection(a, &f.loops)?
        }
        CylPoint::Triple(t) => f
            .loops
            .iter()
            .map(|w| triple_phase(t, w).map(|th| GroupElement::U1(U1::from_angle(th))))
            .collect::<Result<_, _>>()?,
    };
    f.eval_projected(&values)
}

/// Trigonometric-polynomial density on the triple side, normalized against
/// the uniform per-edge measure.
#[derive(Debug, Clone)]
pub struct Density {
    graph: Arc<BasedGraph>,
    loops: Vec<HoopWord>,
    poly: FourierPoly,
    edge_terms: Vec<(Vec<i64>, Complex64)>,
}

/// Points sampled when checking positivity of a density.
const DENSITY_PROBES: usize = 4096;

impl Density {
    /// Checks normalization (constant term 1), reality (Hermitian
    /// coefficients) and nonnegativity on random probes.
    pub fn new(graph: Arc<BasedGraph>, loops: Vec<HoopWord>, poly: FourierPoly) -> Result<Self, CylError> {
        for w in &loops {
            w.validate(&graph)?;
        }
        for t in &poly.terms {
            if t.modes.len() != loops.len() {
                return Err(CylError::ArityMismatch { loops: loops.len(), got: t.modes.len() });
            }
            finite(t.coeff)?;
        }
        let edge_terms = poly.edge_terms(&loops, graph.n_edges())?;
        let collected = collect_terms(&edge_terms);
        let constant = collected.get(&vec![0; graph.n_edges()]).copied().unwrap_or_default();
        if (constant - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(CylError::BadDensity(format!("constant term is {constant}, not 1")));
        }
        for (k, c) in &collected {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            let partner = collected.get(&neg).copied().unwrap_or_default();
            if (partner - c.conj()).norm() > 1e-12 {
                return Err(CylError::BadDensity("density is not real-valued".into()));
            }
        }
        let density = Density { graph, loops, poly, edge_terms };
        let mut rng = RngStream::new(0x5EED_DE25, 0);
        let n_edges = density.graph.n_edges();
        let mut phi = vec![0.0; n_edges];
        for probe in 0..DENSITY_PROBES {
            if probe > 0 {
                phi.iter_mut().for_each(|p| *p = rng.random::<f64>() * std::f64::consts::TAU);
            }
            let v = density.eval_edge_phases(&phi);
            if v.re < -1e-9 {
                return Err(CylError::BadDensity(format!("density takes the negative value {}", v.re)));
            }
        }
        Ok(density)
    }

    /// The uniform density `ρ ≡ 1`.
    pub fn uniform(graph: Arc<BasedGraph>) -> Self {
        let poly = FourierPoly { terms: vec![FourierMonomial { coeff: Complex64::new(1.0, 0.0), modes: vec![] }] };
        let edge_terms = vec![(vec![0; graph.n_edges()], Complex64::new(1.0, 0.0))];
        Density { graph, loops: Vec::new(), poly, edge_terms }
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn loops(&self) -> &[HoopWord] {
        &self.loops
    }

    pub fn poly(&self) -> &FourierPoly {
        &self.poly
    }

    pub fn edge_terms(&self) -> &[(Vec<i64>, Complex64)] {
        &self.edge_terms
    }

    pub fn is_uniform(&self) -> bool {
        self.edge_terms.iter().all(|(k, c)| k.iter().all(|&x| x == 0) || *c == Complex64::new(0.0, 0.0))
    }

    /// `ρ` at per-edge phases `φ_e`.
    pub fn eval_edge_phases(&self, phi: &[f64]) -> Complex64 {
        eval_edge_terms(&self.edge_terms, phi)
    }

    pub fn eval(&self, field: &TripleField) -> Result<f64, CylError> {
        if !Arc::ptr_eq(&self.graph, field.graph()) && *self.graph != **field.graph() {
            return Err(CylError::GraphMismatch);
        }
        Ok(self.eval_edge_phases(&field.edge_phases()).re)
    }

    pub fn rewrite_subdivided(&self, refined: Arc<BasedGraph>, sub: &crate::hoops::Subdivision) -> Result<Density, CylError> {
        let loops: Vec<HoopWord> = self.loops.iter().map(|w| sub.rewrite(w)).collect();
        let edge_terms = self.poly.edge_terms(&loops, refined.n_edges())?;
        Ok(Density { graph: refined, loops, poly: self.poly.clone(), edge_terms })
    }
}

pub(crate) fn eval_edge_terms(terms: &[(Vec<i64>, Complex64)], phi: &[f64]) -> Complex64 {
    terms
        .iter()
        .map(|(k, c)| {
            let phase: f64 = k.iter().zip(phi).filter(|(m, _)| **m != 0).map(|(m, p)| *m as f64 * p).sum();
            c * Complex64::from_polar(1.0, phase)
        })
        .sum()
}

/// Sums coefficients of equal frequency vectors.
pub fn collect_terms(terms: &[(Vec<i64>, Complex64)]) -> std::collections::HashMap<Vec<i64>, Complex64> {
    let mut out = std::collections::HashMap::new();
    for (k, c) in terms {
        *out.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += c;
    }
    out
}

/// One step of a refinement plan and the integrals on either side of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyStep {
    pub edge: EdgeId,
    pub before: Complex64,
    pub after: Complex64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub exact: bool,
    pub steps: Vec<ConsistencyStep>,
}

impl ConsistencyReport {
    pub fn max_delta(&self) -> f64 {
        self.steps.iter().map(|s| s.delta).fold(0.0, f64::max)
    }
}

/// Integrates `f` before and after each subdivision in `plan`.
///
/// Edge ids in the plan refer to the graph as refined by the preceding
/// steps. Uses the exact path when available, otherwise Monte Carlo with
/// `options` (the same stream on both sides of each step).
pub fn check_consistency(
    f: &CylFunction,
    density: Option<&Density>,
    plan: &[EdgeId],
    options: &IntegrationOptions,
) -> Result<ConsistencyReport, CylError> {
    let integrate = |g: &CylFunction, d: Option<&Density>| -> Result<(Complex64, bool), CylError> {
        match integrate_exact(g, d, &ExactBudget::default()) {
            Ok(v) => Ok((v, true)),
            Err(CylError::ExactUnavailable(_)) => integrate_cyl(g, d, options).map(|r| (r.estimate, false)),
            Err(e) => Err(e),
        }
    };
    let mut current = f.clone();
    let mut density = density.cloned();
    let (mut before, mut all_exact) = integrate(&current, density.as_ref())?;
    let mut steps = Vec::with_capacity(plan.len());
    for &edge in plan {
        let (refined, sub) = subdivide_edge(&current.graph, edge)?;
        let refined = Arc::new(refined);
        current = current.rewrite_subdivided(refined.clone(), &sub);
        density = density.map(|d| d.rewrite_subdivided(refined, &sub)).transpose()?;
        let (after, exact) = integrate(&current, density.as_ref())?;
        all_exact &= exact;
        steps.push(ConsistencyStep { edge, before, after, delta: (after - before).norm() });
        before = after;
    }
    Ok(ConsistencyReport { exact: all_exact, steps })
}

/// Random polynomial kernels for property checks.
pub mod random {
    use super::*;

    /// Wilson polynomial with `n_terms` monomials over `n_loops` random
    /// loops, powers in `0..=max_power`, coefficients in the unit square.
    pub fn wilson_function<R: Rng + ?Sized>(
        graph: &Arc<BasedGraph>,
        rng: &mut R,
        n_loops: usize,
        loop_steps: usize,
        n_terms: usize,
        max_power: u32,
    ) -> CylFunction {
        let loops: Vec<HoopWord> = (0..n_loops).map(|_| graph.random_loop(rng, loop_steps)).collect();
        let terms = (0..n_terms)
            .map(|_| WilsonMonomial {
                coeff: Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                powers: (0..n_loops).map(|_| rng.random_range(0..=max_power)).collect(),
            })
            .collect();
        CylFunction::new(graph.clone(), Side::Connection, loops, Kernel::Wilson(WilsonPoly { terms }))
            .expect("random loops are valid")
    }

    /// Fourier polynomial with modes in `-max_mode..=max_mode`.
    pub fn fourier_function<R: Rng + ?Sized>(
        graph: &Arc<BasedGraph>,
        side: Side,
        rng: &mut R,
        n_loops: usize,
        loop_steps: usize,
        n_terms: usize,
        max_mode: i64,
    ) -> CylFunction {
        let loops: Vec<HoopWord> = (0..n_loops).map(|_| graph.random_loop(rng, loop_steps)).collect();
        let terms = (0..n_terms)
            .map(|_| FourierMonomial {
                coeff: Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                modes: (0..n_loops).map(|_| rng.random_range(-max_mode..=max_mode)).collect(),
            })
            .collect();
        CylFunction::new(graph.clone(), side, loops, Kernel::Fourier(FourierPoly { terms }))
            .expect("random loops are valid")
    }
}
