//! Discretized S¹-invariant hermitian triples and the loop functional
//! `P_α = exp(i (sgn·Vol(Σ_α) + ∫_{Σ_α} ω))`.
//!
//! Each edge carries the area of its tube `e × S¹`, the flux of the
//! almost-Kähler form through it, and the sign comparing the tube's
//! orientation with the ambient one. A loop's phase is the signed sum of
//! the per-edge contributions `orient·area + flux`, so reversing the loop
//! conjugates `P_α` and concatenation multiplies.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::algebra::U1;
use crate::hoops::{BasedGraph, EdgeId, HoopError, HoopWord, Subdivision};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripleError {
    #[error("edge #{0} is not part of the field's graph")]
    UnknownEdge(usize),
    #[error("split fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("area of edge `{edge}` must be positive and finite, got {area}")]
    NonPositiveArea { edge: String, area: f64 },
    #[error("flux of edge `{edge}` is not finite")]
    NonFiniteFlux { edge: String },
    #[error("edge `{edge}` violates |flux| ≤ area ({flux} vs {area})")]
    Incompatible { edge: String, area: f64, flux: f64 },
    #[error("expected {expected} per-edge records, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("field does not match the subdivision being undone")]
    NotSubdivided,
    #[error(transparent)]
    Hoop(#[from] HoopError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn from_sign(s: i64) -> Option<Orientation> {
        match s {
            1 => Some(Orientation::Positive),
            -1 => Some(Orientation::Negative),
            _ => None,
        }
    }
}

/// Per-edge data of one triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeData {
    pub area: f64,
    pub flux: f64,
    pub orient: Orientation,
}

impl TubeData {
    /// The edge's phase contribution `orient·area + flux`.
    pub fn phase(&self) -> f64 {
        self.orient.sign() * self.area + self.flux
    }
}

/// A point of the discretized triple space, within the component `k_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleField {
    graph: Arc<BasedGraph>,
    tubes: Vec<TubeData>,
    k_class: i64,
}

impl TripleField {
    /// Validates positivity and finiteness; `strict` additionally requires
    /// `|flux| ≤ area` on every edge.
    pub fn new(graph: Arc<BasedGraph>, tubes: Vec<TubeData>, k_class: i64, strict: bool) -> Result<Self, TripleError> {
        if tubes.len() != graph.n_edges() {
            return Err(TripleError::WrongLength { expected: graph.n_edges(), got: tubes.len() });
        }
        for (t, e) in tubes.iter().zip(graph.edges()) {
            if !(t.area.is_finite() && t.area > 0.0) {
                return Err(TripleError::NonPositiveArea { edge: e.name.clone(), area: t.area });
            }
            if !t.flux.is_finite() {
                return Err(TripleError::NonFiniteFlux { edge: e.name.clone() });
            }
            if strict && t.flux.abs() > t.area {
                return Err(TripleError::Incompatible { edge: e.name.clone(), area: t.area, flux: t.flux });
            }
        }
        Ok(TripleField { graph, tubes, k_class })
    }

    /// Areas uniform in `area_range`, fluxes uniform in `flux_range`,
    /// orientations fair coin flips.
    pub fn random<R: Rng + ?Sized>(
        graph: Arc<BasedGraph>,
        k_class: i64,
        area_range: (f64, f64),
        flux_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self, TripleError> {
        let sample = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let tubes = (0..graph.n_edges())
            .map(|_| TubeData {
                area: sample(rng, area_range),
                flux: sample(rng, flux_range),
                orient: if rng.random_bool(0.5) { Orientation::Positive } else { Orientation::Negative },
            })
            .collect();
        Self::new(graph, tubes, k_class, false)
    }

    pub fn graph(&self) -> &Arc<BasedGraph> {
        &self.graph
    }

    pub fn tubes(&self) -> &[TubeData] {
        &self.tubes
    }

    pub fn k_class(&self) -> i64 {
        self.k_class
    }

    /// Per-edge phase variables `φ_e = orient_e·area_e + flux_e`.
    pub fn edge_phases(&self) -> Vec<f64> {
        self.tubes.iter().map(TubeData::phase).collect()
    }

    /// Splits edge `sub.split` at fraction `t`: the first half receives
    /// `t·area` and `t·flux`, the second half the remainder.
    pub fn subdivide(&self, refined: Arc<BasedGraph>, sub: &Subdivision, t: f64) -> Result<TripleField, TripleError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(TripleError::BadFraction(t));
        }
        let old = *self.tubes.get(sub.split.0).ok_or(TripleError::UnknownEdge(sub.split.0))?;
        let mut tubes = self.tubes.clone();
        tubes[sub.first.0] = TubeData { area: t * old.area, flux: t * old.flux, orient: old.orient };
        tubes.push(TubeData { area: old.area - t * old.area, flux: old.flux - t * old.flux, orient: old.orient });
        TripleField::new(refined, tubes, self.k_class, false)
    }

    /// Inverse of [`TripleField::subdivide`]: merges the two halves back
    /// onto `original`.
    pub fn merge(&self, original: Arc<BasedGraph>, sub: &Subdivision) -> Result<TripleField, TripleError> {
        if self.tubes.len() != original.n_edges() + 1 || sub.second.0 != original.n_edges() {
            return Err(TripleError::NotSubdivided);
        }
        let (a, b) = (self.tubes[sub.first.0], self.tubes[sub.second.0]);
        let mut tubes = self.tubes[..original.n_edges()].to_vec();
        tubes[sub.split.0] = TubeData { area: a.area + b.area, flux: a.flux + b.flux, orient: a.orient };
        TripleField::new(original, tubes, self.k_class, false)
    }
}

/// Signed multiplicity vector of a word, checked against `n_edges`.
pub(crate) fn checked_multiplicities(word: &HoopWord, n_edges: usize) -> Result<Vec<i64>, TripleError> {
    if let Some(e) = word.edges().find(|e| e.0 >= n_edges) {
        return Err(TripleError::UnknownEdge(e.0));
    }
    Ok(word.multiplicities(n_edges))
}

/// `θ_α = Σ_e n_α(e) (orient_e·area_e + flux_e)`, where `n_α(e)` is the
/// signed number of traversals. Summing over multiplicities makes the value
/// depend only on the reduced word and flip sign exactly under inversion.
pub fn triple_phase(field: &TripleField, word: &HoopWord) -> Result<f64, TripleError> {
    let n = checked_multiplicities(word, field.tubes.len())?;
    Ok(n.iter().zip(&field.tubes).filter(|(m, _)| **m != 0).map(|(m, t)| *m as f64 * t.phase()).sum())
}

pub fn p_alpha(field: &TripleField, word: &HoopWord) -> Result<U1, TripleError> {
    triple_phase(field, word).map(U1::from_angle)
}

/// `P_α` as a complex number of unit modulus.
pub fn p_alpha_complex(field: &TripleField, word: &HoopWord) -> Result<Complex64, TripleError> {
    p_alpha(field, word).map(|u| u.to_complex())
}

/// Componentwise `P_α` over a loop list.
pub fn project_triples(field: &TripleField, loops: &[HoopWord]) -> Result<Vec<U1>, TripleError> {
    loops.iter().map(|w| p_alpha(field, w)).collect()
}

/// Convenience for a one-edge graph edit.
pub fn subdivide_triple(
    field: &TripleField,
    e: EdgeId,
    t: f64,
) -> Result<(TripleField, Subdivision), TripleError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(TripleError::BadFraction(t));
    }
    if e.0 >= field.graph.n_edges() {
        return Err(TripleError::UnknownEdge(e.0));
    }
    let (refined, sub) = crate::hoops::subdivide_edge(&field.graph, e)?;
    let out = field.subdivide(Arc::new(refined), &sub, t)?;
    Ok((out, sub))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::RngStream;
    use crate::hoops::{compose, invert, reduce_word};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn loop_graph() -> Arc<BasedGraph> {
        Arc::new(BasedGraph::from_indices(1, &[(0, 0)], 0).unwrap())
    }

    fn quarter_turn() -> TripleField {
        let tubes = vec![TubeData { area: FRAC_PI_2, flux: 0.0, orient: Orientation::Positive }];
        TripleField::new(loop_graph(), tubes, 0, false).unwrap()
    }

    fn random_field(rng: &mut RngStream) -> TripleField {
        let g = Arc::new(BasedGraph::random(rng, 8));
        TripleField::random(g, 3, (0.1, 4.0), (-2.0, 2.0), rng).unwrap()
    }

    #[test]
    fn phase_examples() {
        let f = quarter_turn();
        let g = f.graph().clone();
        assert_eq!(triple_phase(&f, &HoopWord::empty(g.basepoint())).unwrap(), 0.0);
        assert_eq!(triple_phase(&f, &g.parse_word("e1").unwrap()).unwrap(), FRAC_PI_2);
        assert_eq!(p_alpha(&f, &HoopWord::empty(g.basepoint())).unwrap(), U1::IDENTITY);
        let i = p_alpha_complex(&f, &g.parse_word("e1").unwrap()).unwrap();
        assert!((i - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        let w = g.parse_word("e1 e1").unwrap();
        assert_eq!(triple_phase(&f, &invert(&w)).unwrap(), -triple_phase(&f, &w).unwrap());
    }

    #[test]
    fn validation() {
        let g = loop_graph();
        let bad = |area, flux| vec![TubeData { area, flux, orient: Orientation::Negative }];
        assert!(matches!(TripleField::new(g.clone(), bad(0.0, 0.0), 0, false), Err(TripleError::NonPositiveArea { .. })));
        assert!(matches!(TripleField::new(g.clone(), bad(1.0, f64::NAN), 0, false), Err(TripleError::NonFiniteFlux { .. })));
        assert!(TripleField::new(g.clone(), bad(1.0, 2.0), 0, false).is_ok());
        assert!(matches!(TripleField::new(g.clone(), bad(1.0, 2.0), 0, true), Err(TripleError::Incompatible { .. })));
        assert!(matches!(TripleField::new(g, vec![], 0, false), Err(TripleError::WrongLength { .. })));
    }

    #[test]
    fn projection_is_componentwise() {
        let mut rng = RngStream::new(2, 0);
        let f = random_field(&mut rng);
        assert!(project_triples(&f, &[]).unwrap().is_empty());
        let loops: Vec<_> = (0..4).map(|_| f.graph().random_loop(&mut rng, 6)).collect();
        let proj = project_triples(&f, &loops).unwrap();
        for (w, p) in loops.iter().zip(&proj) {
            assert_eq!(*p, p_alpha(&f, w).unwrap());
        }
        let other = BasedGraph::from_indices(1, &[(0, 0); 3], 0).unwrap();
        let far = other.parse_word("e3").unwrap();
        assert_eq!(p_alpha(&quarter_turn(), &far), Err(TripleError::UnknownEdge(2)));
    }

    #[test]
    fn homomorphism_on_random_cases() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..10_000 {
            let f = random_field(&mut rng);
            let g = f.graph();
            let (a, b) = (g.random_loop(&mut rng, 6), g.random_loop(&mut rng, 6));
            let pab = p_alpha(&f, &compose(&a, &b).unwrap()).unwrap();
            let prod = p_alpha(&f, &a).unwrap() * p_alpha(&f, &b).unwrap();
            assert!(pab.distance(&prod) < 1e-12);
            assert_eq!(triple_phase(&f, &invert(&a)).unwrap(), -triple_phase(&f, &a).unwrap());
            assert!(p_alpha(&f, &invert(&a)).unwrap().distance(&p_alpha(&f, &a).unwrap().conj()) <= 4.0 * f64::EPSILON * TAU);
            let z = p_alpha_complex(&f, &a).unwrap();
            assert!((z.norm() - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn phase_ignores_backtracks() {
        let mut rng = RngStream::new(6, 0);
        for _ in 0..1000 {
            let f = random_field(&mut rng);
            let g = f.graph();
            let w = g.random_loop(&mut rng, 6);
            let mut raw = Vec::new();
            for l in w.letters() {
                raw.push(*l);
                raw.push(l.inverse());
                raw.push(*l);
            }
            let r = reduce_word(g, &raw).unwrap();
            assert_eq!(r, w);
            // raw evaluation by direct summation over the letters
            let direct: f64 = raw.iter().map(|l| l.dir.sign() as f64 * f.tubes()[l.edge.0].phase()).sum();
            assert!((direct - triple_phase(&f, &r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn subdivision_preserves_phases() {
        let mut rng = RngStream::new(8, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let f = random_field(&mut rng);
            let e = EdgeId(rng.random_range(0..f.graph().n_edges()));
            let t = rng.random_range(0.05..0.95);
            let (h, sub) = subdivide_triple(&f, e, t).unwrap();
            let w = f.graph().random_loop(&mut rng, 8);
            let before = p_alpha(&f, &w).unwrap();
            let after = p_alpha(&h, &sub.rewrite(&w)).unwrap();
            worst = worst.max(before.distance(&after));
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn subdivide_then_merge() {
        let f = quarter_turn();
        let w = f.graph().parse_word("e1").unwrap();
        let (h, sub) = subdivide_triple(&f, EdgeId(0), 0.5).unwrap();
        let p = p_alpha(&h, &sub.rewrite(&w)).unwrap();
        assert!(p.distance(&p_alpha(&f, &w).unwrap()) < 1e-12);

        let (h, sub) = subdivide_triple(&f, EdgeId(0), 0.3).unwrap();
        let back = h.merge(f.graph().clone(), &sub).unwrap();
        assert!((triple_phase(&back, &w).unwrap() - triple_phase(&f, &w).unwrap()).abs() < 1e-15);
        assert_eq!(back.k_class(), f.k_class());

        assert_eq!(subdivide_triple(&f, EdgeId(0), 1.0).map(|_| ()), Err(TripleError::BadFraction(1.0)));
        assert_eq!(subdivide_triple(&f, EdgeId(0), 0.0).map(|_| ()), Err(TripleError::BadFraction(0.0)));
        assert_eq!(subdivide_triple(&f, EdgeId(4), 0.5).map(|_| ()), Err(TripleError::UnknownEdge(4)));
    }
}
