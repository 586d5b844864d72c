//! Monte-Carlo integration with deterministic batch streams.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::{integrate_exact, CylError, CylFunction, Density, ExactBudget, Side};
use crate::algebra::{haar_su2, haar_u1, Flavor, Group, GroupElement, RngStream, SU2, U1};
use crate::hoops::{Direction, HoopWord};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub stream: u64,
    /// Samples per batch; batch `b` draws from `RngStream::new(seed, stream).derive(b)`.
    pub batch_size: usize,
    /// Also compute the exact integral when the kernel allows it.
    pub exact: bool,
}

impl IntegrationOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        IntegrationOptions { n_samples, seed, stream: 0, batch_size: 4096, exact: true }
    }
}

/// Monte-Carlo estimate with standard error, plus the exact value when
/// requested and available.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub estimate: Complex64,
    /// Sample standard deviation (of the complex values) over `√n`.
    pub stderr: f64,
    pub n_samples: usize,
    pub exact: Option<Complex64>,
    /// Why the exact value is missing, if it was requested.
    pub exact_unavailable: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: u64,
    mean: Complex64,
    m2: f64,
}

impl Moments {
    fn empty() -> Self {
        Moments { n: 0, mean: Complex64::new(0.0, 0.0), m2: 0.0 }
    }

    fn push(&mut self, x: Complex64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += (d.conj() * (x - self.mean)).re;
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * (other.n as f64 / n as f64),
            m2: self.m2 + other.m2 + delta.norm_sqr() * (self.n as f64 * other.n as f64 / n as f64),
        }
    }
}

enum Sampler {
    Su2 { loops: Vec<HoopWord>, n_edges: usize },
    U1Links { loops: Vec<HoopWord>, n_edges: usize },
    /// Per-edge phases, optionally weighted by a density.
    EdgePhases { mult: Vec<Vec<i64>>, weight: Option<Vec<(Vec<i64>, Complex64)>>, n_edges: usize },
    /// Loop angles drawn directly (independent loops, uniform measure).
    LoopAngles { n_loops: usize },
}

fn word_product<G: Group>(links: &[G], w: &HoopWord) -> G {
    w.letters().iter().fold(G::identity(), |acc, l| match l.dir {
        Direction::Forward => acc.compose(&links[l.edge.0]),
        Direction::Backward => acc.compose(&links[l.edge.0].inverse()),
    })
}

/// True when every loop owns an edge traversed once by it and by no other
/// loop; then the loop angles are independent and uniform under the
/// per-edge measure.
pub(crate) fn loops_independent(mult: &[Vec<i64>]) -> bool {
    (0..mult.len()).all(|j| {
        (0..mult[j].len()).any(|e| mult[j][e].abs() == 1 && (0..mult.len()).all(|i| i == j || mult[i][e] == 0))
    })
}

impl Sampler {
    fn draw(&self, f: &CylFunction, rng: &mut RngStream) -> Result<Complex64, CylError> {
        match self {
            Sampler::Su2 { loops, n_edges } => {
                let links: Vec<SU2> = (0..*n_edges).map(|_| haar_su2(rng)).collect();
                let vals: Vec<GroupElement> = loops.iter().map(|w| GroupElement::Su2(word_product(&links, w))).collect();
                f.eval_projected(&vals)
            }
            Sampler::U1Links { loops, n_edges } => {
                let links: Vec<U1> = (0..*n_edges).map(|_| haar_u1(rng)).collect();
                let vals: Vec<GroupElement> = loops.iter().map(|w| GroupElement::U1(word_product(&links, w))).collect();
                f.eval_projected(&vals)
            }
            Sampler::EdgePhases { mult, weight, n_edges } => {
                let phi: Vec<f64> = (0..*n_edges).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
                let vals: Vec<GroupElement> = mult
                    .iter()
                    .map(|n| GroupElement::U1(U1::from_angle(n.iter().zip(&phi).map(|(m, p)| *m as f64 * p).sum())))
                    .collect();
                let v = f.eval_projected(&vals)?;
                Ok(match weight {
                    Some(w) => v * super::eval_edge_terms(w, &phi),
                    None => v,
                })
            }
            Sampler::LoopAngles { n_loops } => {
                let vals: Vec<GroupElement> = (0..*n_loops).map(|_| GroupElement::U1(haar_u1(rng))).collect();
                f.eval_projected(&vals)
            }
        }
    }
}

fn sampler_for(f: &CylFunction, density: Option<&Density>) -> Result<Sampler, CylError> {
    let n_edges = f.graph().n_edges();
    let loops = f.loops().to_vec();
    Ok(match (f.side(), f.kernel().flavor()) {
        (Side::Connection, Flavor::Su2) => Sampler::Su2 { loops, n_edges },
        (Side::Connection, Flavor::U1) => Sampler::U1Links { loops, n_edges },
        (Side::Triple, _) => {
            let mult: Vec<Vec<i64>> = loops.iter().map(|w| w.multiplicities(n_edges)).collect();
            match density {
                Some(d) if !d.is_uniform() => {
                    if d.graph().n_edges() != n_edges {
                        return Err(CylError::GraphMismatch);
                    }
                    Sampler::EdgePhases { mult, weight: Some(d.edge_terms().to_vec()), n_edges }
                }
                _ if loops_independent(&mult) => Sampler::LoopAngles { n_loops: loops.len() },
                _ => Sampler::EdgePhases { mult, weight: None, n_edges },
            }
        }
    })
}

/// Monte-Carlo integral of `f` (times `density` on the triple side) under
/// the product Haar measure; batches run in parallel and are merged in
/// batch order, so results do not depend on the thread count.
pub fn integrate_cyl(f: &CylFunction, density: Option<&Density>, options: &IntegrationOptions) -> Result<Integral, CylError> {
    if options.n_samples < 2 {
        return Err(CylError::TooFewSamples(options.n_samples));
    }
    if density.is_some() && f.side() != Side::Triple {
        return Err(CylError::SideMismatch { expected: Side::Triple, found: f.side() });
    }
    let sampler = sampler_for(f, density)?;
    let base = RngStream::new(options.seed, options.stream);
    let batch = options.batch_size.max(1);
    let n_batches = options.n_samples.div_ceil(batch);
    let parts: Vec<Moments> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = base.derive(b as u64);
            let size = batch.min(options.n_samples - b * batch);
            let mut m = Moments::empty();
            for _ in 0..size {
                m.push(sampler.draw(f, &mut rng)?);
            }
            Ok(m)
        })
        .collect::<Result<_, CylError>>()?;
    let total = parts.into_iter().fold(Moments::empty(), Moments::merge);
    let variance = total.m2.max(0.0) / (total.n - 1) as f64;
    let stderr = (variance / total.n as f64).sqrt();

    let (exact, exact_unavailable) = if options.exact {
        match integrate_exact(f, density, &ExactBudget::default()) {
            Ok(v) => (Some(v), None),
            Err(CylError::ExactUnavailable(why)) => (None, Some(why)),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    Ok(Integral { estimate: total.mean, stderr, n_samples: options.n_samples, exact, exact_unavailable })
}
