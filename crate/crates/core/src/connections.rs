//! Discrete connections on a based graph: holonomies, gauge action and
//! Wilson functions, plus finite polynomials in Wilson functions.

use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{haar_su2, haar_u1, Flavor, Group, GroupElement, RngStream, SU2, U1};
use crate::hoops::{compose, invert, BasedGraph, Direction, HoopError, HoopWord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConnectionError {
    #[error("edge #{0} is not part of the connection's graph")]
    UnknownEdge(usize),
    #[error("expected a {expected} object, found {found}")]
    FlavorMismatch { expected: Flavor, found: Flavor },
    #[error("objects live on different graphs")]
    GraphMismatch,
    #[error("expected {expected} group elements, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Hoop(#[from] HoopError),
}

/// Group elements indexed by edge (for connections) or vertex (for gauge
/// transforms).
#[derive(Debug, Clone, PartialEq)]
pub enum Links {
    Su2(Vec<SU2>),
    U1(Vec<U1>),
}

impl Links {
    pub fn flavor(&self) -> Flavor {
        match self {
            Links::Su2(_) => Flavor::Su2,
            Links::U1(_) => Flavor::U1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Links::Su2(v) => v.len(),
            Links::U1(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn identity(flavor: Flavor, n: usize) -> Links {
        match flavor {
            Flavor::Su2 => Links::Su2(vec![SU2::IDENTITY; n]),
            Flavor::U1 => Links::U1(vec![U1::IDENTITY; n]),
        }
    }

    fn haar(flavor: Flavor, n: usize, rng: &mut RngStream) -> Links {
        match flavor {
            Flavor::Su2 => Links::Su2((0..n).map(|_| haar_su2(rng)).collect()),
            Flavor::U1 => Links::U1((0..n).map(|_| haar_u1(rng)).collect()),
        }
    }
}

fn same_graph(a: &Arc<BasedGraph>, b: &Arc<BasedGraph>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// An assignment of a group element to every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    graph: Arc<BasedGraph>,
    links: Links,
}

impl Connection {
    pub fn new(graph: Arc<BasedGraph>, links: Links) -> Result<Self, ConnectionError> {
        if links.len() != graph.n_edges() {
            return Err(ConnectionError::WrongLength { expected: graph.n_edges(), got: links.len() });
        }
        Ok(Connection { graph, links })
    }

    pub fn identity(graph: Arc<BasedGraph>, flavor: Flavor) -> Self {
        let links = Links::identity(flavor, graph.n_edges());
        Connection { graph, links }
    }

    /// Independent Haar element on every edge.
    pub fn haar(graph: Arc<BasedGraph>, flavor: Flavor, rng: &mut RngStream) -> Self {
        let links = Links::haar(flavor, graph.n_edges(), rng);
        Connection { graph, links }
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn links(&self) -> &Links {
        &self.links
    }

    pub fn flavor(&self) -> Flavor {
        self.links.flavor()
    }

    pub fn su2_links(&self) -> Result<&[SU2], ConnectionError> {
        match &self.links {
            Links::Su2(v) => Ok(v),
            Links::U1(_) => Err(ConnectionError::FlavorMismatch { expected: Flavor::Su2, found: Flavor::U1 }),
        }
    }

    pub fn u1_links(&self) -> Result<&[U1], ConnectionError> {
        match &self.links {
            Links::U1(v) => Ok(v),
            Links::Su2(_) => Err(ConnectionError::FlavorMismatch { expected: Flavor::U1, found: Flavor::Su2 }),
        }
    }

    /// Transports this connection to a graph in which edge `split` was cut
    /// into `first · second`, assigning `first` the given element and
    /// `second` whatever keeps the product equal to the old link.
    pub fn subdivide(
        &self,
        refined: Arc<BasedGraph>,
        sub: &crate::hoops::Subdivision,
        first: GroupElement,
    ) -> Result<Connection, ConnectionError> {
        fn split<G: Group>(links: &[G], sub: &crate::hoops::Subdivision, first: G) -> Vec<G> {
            let old = links[sub.split.0];
            let mut out = links.to_vec();
            out[sub.first.0] = first;
            out.push(first.inverse().compose(&old));
            out
        }
        let links = match (&self.links, first) {
            (Links::Su2(v), GroupElement::Su2(g)) => Links::Su2(split(v, sub, g)),
            (Links::U1(v), GroupElement::U1(g)) => Links::U1(split(v, sub, g)),
            (l, g) => return Err(ConnectionError::FlavorMismatch { expected: l.flavor(), found: g.flavor() }),
        };
        Connection::new(refined, links)
    }
}

/// An assignment of a group element to every vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTransform {
    graph: Arc<BasedGraph>,
    values: Links,
}

impl GaugeTransform {
    pub fn new(graph: Arc<BasedGraph>, values: Links) -> Result<Self, ConnectionError> {
        if values.len() != graph.n_vertices() {
            return Err(ConnectionError::WrongLength { expected: graph.n_vertices(), got: values.len() });
        }
        Ok(GaugeTransform { graph, values })
    }

    pub fn identity(graph: Arc<BasedGraph>, flavor: Flavor) -> Self {
        let values = Links::identity(flavor, graph.n_vertices());
        GaugeTransform { graph, values }
    }

    pub fn haar(graph: Arc<BasedGraph>, flavor: Flavor, rng: &mut RngStream) -> Self {
        let values = Links::haar(flavor, graph.n_vertices(), rng);
        GaugeTransform { graph, values }
    }

    pub fn values(&self) -> &Links {
        &self.values
    }

    /// Value at the basepoint; holonomies conjugate by it.
    pub fn at_basepoint(&self) -> GroupElement {
        let b = self.graph.basepoint().0;
        match &self.values {
            Links::Su2(v) => GroupElement::Su2(v[b]),
            Links::U1(v) => GroupElement::U1(v[b]),
        }
    }

    /// `(self ∘ first)(v) = self(v) · first(v)`.
    pub fn after(&self, first: &GaugeTransform) -> Result<GaugeTransform, ConnectionError> {
        if !same_graph(&self.graph, &first.graph) {
            return Err(ConnectionError::GraphMismatch);
        }
        let values = match (&self.values, &first.values) {
            (Links::Su2(a), Links::Su2(b)) => Links::Su2(a.iter().zip(b).map(|(x, y)| *x * *y).collect()),
            (Links::U1(a), Links::U1(b)) => Links::U1(a.iter().zip(b).map(|(x, y)| *x * *y).collect()),
            (a, b) => return Err(ConnectionError::FlavorMismatch { expected: a.flavor(), found: b.flavor() }),
        };
        Ok(GaugeTransform { graph: self.graph.clone(), values })
    }
}

fn word_product<G: Group>(links: &[G], word: &HoopWord) -> Result<G, ConnectionError> {
    let mut acc = G::identity();
    for l in word.letters() {
        let g = links.get(l.edge.0).ok_or(ConnectionError::UnknownEdge(l.edge.0))?;
        acc = match l.dir {
            Direction::Forward => acc.compose(g),
            Direction::Backward => acc.compose(&g.inverse()),
        };
    }
    Ok(acc)
}

/// Ordered product of link elements along the word.
pub fn holonomy(a: &Connection, word: &HoopWord) -> Result<GroupElement, ConnectionError> {
    match &a.links {
        Links::Su2(v) => word_product(v, word).map(GroupElement::Su2),
        Links::U1(v) => word_product(v, word).map(GroupElement::U1),
    }
}

pub fn holonomy_su2(a: &Connection, word: &HoopWord) -> Result<SU2, ConnectionError> {
    word_product(a.su2_links()?, word)
}

/// Abelian counterpart of the Wilson function: the holonomy angle.
pub fn holonomy_u1(a: &Connection, word: &HoopWord) -> Result<U1, ConnectionError> {
    word_product(a.u1_links()?, word)
}

/// `T_α(A) = ½ Tr H(α, A)`.
pub fn wilson(a: &Connection, word: &HoopWord) -> Result<f64, ConnectionError> {
    Ok(0.5 * holonomy_su2(a, word)?.trace())
}

/// `(g·A)(e) = g(source e) · A(e) · g(target e)⁻¹`.
pub fn gauge_act(g: &GaugeTransform, a: &Connection) -> Result<Connection, ConnectionError> {
    if !same_graph(&g.graph, &a.graph) {
        return Err(ConnectionError::GraphMismatch);
    }
    fn act<G: Group>(graph: &BasedGraph, gv: &[G], links: &[G]) -> Vec<G> {
        graph
            .edges()
            .iter()
            .zip(links)
            .map(|(e, u)| gv[e.source.0].compose(u).compose(&gv[e.target.0].inverse()))
            .collect()
    }
    let links = match (&g.values, &a.links) {
        (Links::Su2(gv), Links::Su2(l)) => Links::Su2(act(&a.graph, gv, l)),
        (Links::U1(gv), Links::U1(l)) => Links::U1(act(&a.graph, gv, l)),
        (x, y) => return Err(ConnectionError::FlavorMismatch { expected: y.flavor(), found: x.flavor() }),
    };
    Ok(Connection { graph: a.graph.clone(), links })
}

/// One product `c · T_{α₁} ⋯ T_{α_k}`; an empty factor list is the constant `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraTerm {
    pub coeff: Complex64,
    pub factors: Vec<HoopWord>,
}

/// A finite complex combination of products of Wilson functions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HolonomyAlgebraElement {
    terms: Vec<AlgebraTerm>,
}

impl HolonomyAlgebraElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        HolonomyAlgebraElement { terms: vec![AlgebraTerm { coeff: c, factors: Vec::new() }] }
    }

    pub fn wilson(word: HoopWord) -> Self {
        Self::product(Complex64::new(1.0, 0.0), vec![word])
    }

    pub fn product(coeff: Complex64, factors: Vec<HoopWord>) -> Self {
        HolonomyAlgebraElement { terms: vec![AlgebraTerm { coeff, factors }] }
    }

    pub fn from_terms(terms: Vec<AlgebraTerm>) -> Self {
        HolonomyAlgebraElement { terms }
    }

    pub fn terms(&self) -> &[AlgebraTerm] {
        &self.terms
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| AlgebraTerm { coeff: t.coeff * c, factors: t.factors.clone() }).collect();
        HolonomyAlgebraElement { terms }
    }

    /// `Σ |c|`, an upper bound for the sup norm.
    pub fn coefficient_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }

    /// Rewrites every product of Wilson functions into a linear combination
    /// of single Wilson functions using `T_α T_β = ½ (T_{αβ} + T_{αβ⁻¹})`.
    pub fn linearize(&self) -> Result<Self, ConnectionError> {
        let mut done = Vec::new();
        let mut work: Vec<AlgebraTerm> = self.terms.clone();
        while let Some(mut t) = work.pop() {
            t.factors.retain(|w| !w.is_empty());
            if t.factors.len() <= 1 {
                done.push(t);
                continue;
            }
            let b = t.factors.pop().expect("len ≥ 2");
            let a = t.factors.pop().expect("len ≥ 2");
            let half = t.coeff * 0.5;
            for w in [compose(&a, &b)?, compose(&a, &invert(&b))?] {
                let mut factors = t.factors.clone();
                factors.push(w);
                work.push(AlgebraTerm { coeff: half, factors });
            }
        }
        done.reverse();
        Ok(HolonomyAlgebraElement { terms: done })
    }
}

impl Add for HolonomyAlgebraElement {
    type Output = HolonomyAlgebraElement;
    fn add(mut self, rhs: HolonomyAlgebraElement) -> HolonomyAlgebraElement {
        self.terms.extend(rhs.terms);
        self
    }
}

impl Mul for &HolonomyAlgebraElement {
    type Output = HolonomyAlgebraElement;
    fn mul(self, rhs: &HolonomyAlgebraElement) -> HolonomyAlgebraElement {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                terms.push(AlgebraTerm { coeff: a.coeff * b.coeff, factors });
            }
        }
        HolonomyAlgebraElement { terms }
    }
}

/// `Σ c · Π T_{α}(A)`.
pub fn eval_algebra(x: &HolonomyAlgebraElement, a: &Connection) -> Result<Complex64, ConnectionError> {
    let mut total = Complex64::new(0.0, 0.0);
    for t in &x.terms {
        let mut prod = 1.0;
        for w in &t.factors {
            prod *= wilson(a, w)?;
        }
        total += t.coeff * prod;
    }
    Ok(total)
}

/// Best value found and the index of the sample that produced it.
fn sampled_max(
    x: &HolonomyAlgebraElement,
    graph: &Arc<BasedGraph>,
    n_samples: usize,
    rng: &RngStream,
) -> Result<(f64, usize), ConnectionError> {
    let n_samples = n_samples.max(1);
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let a = Connection::haar(graph.clone(), Flavor::Su2, &mut r);
            eval_algebra(x, &a).map(|v| (v.norm(), i))
        })
        .try_reduce(|| (0.0, usize::MAX), |p, q| Ok(if q.0 > p.0 || (q.0 == p.0 && q.1 < p.1) { q } else { p }))
}

/// Lower bound on `sup |x|` from `n_samples` Haar-random connections.
///
/// Sample `i` uses `rng.derive(i)`, so the estimate is monotone in
/// `n_samples` and independent of the thread count.
pub fn sup_norm_estimate(
    x: &HolonomyAlgebraElement,
    graph: &Arc<BasedGraph>,
    n_samples: usize,
    rng: &RngStream,
) -> Result<f64, ConnectionError> {
    sampled_max(x, graph, n_samples, rng).map(|(v, _)| v)
}

/// [`sup_norm_estimate`] followed by coordinate ascent from the best sample:
/// each link is nudged by small rotations about the three axes, keeping
/// improvements, with the step halved every round.
pub fn sup_norm_refined(
    x: &HolonomyAlgebraElement,
    graph: &Arc<BasedGraph>,
    n_samples: usize,
    rng: &RngStream,
    rounds: usize,
) -> Result<f64, ConnectionError> {
    let (mut best, idx) = sampled_max(x, graph, n_samples, rng)?;
    let mut links = {
        let mut r = rng.derive(idx as u64);
        let a = Connection::haar(graph.clone(), Flavor::Su2, &mut r);
        a.su2_links()?.to_vec()
    };
    let mut step = 0.25;
    for _ in 0..rounds {
        for e in 0..links.len() {
            for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
                for sign in [1.0, -1.0] {
                    let nudge = SU2::from_axis_angle(axis, sign * step).expect("finite axis");
                    let mut trial = links.clone();
                    trial[e] = nudge * links[e];
                    let a = Connection::new(graph.clone(), Links::Su2(trial.clone()))?;
                    let v = eval_algebra(x, &a)?.norm();
                    if v > best {
                        best = v;
                        links = trial;
                    }
                }
            }
        }
        step *= 0.5;
    }
    Ok(best)
}
