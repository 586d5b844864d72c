//! Algebraic invariants as property tests over seeded random instances.

use std::sync::Arc;

use hooploop_core::algebra::{Flavor, RngStream};
use hooploop_core::connections::{gauge_act, holonomy_su2, wilson, Connection, GaugeTransform};
use hooploop_core::hoops::{compose, invert, reduce_word, subdivide_edge, BasedGraph, EdgeId, Letter};
use hooploop_core::phase::{poisson_bracket, random, symplectic_omega, Differentiation, PhasePoint, TripleTangent};
use hooploop_core::triples::{subdivide_triple, triple_phase, TripleField};
use proptest::prelude::*;
use rand::Rng;

fn setup(seed: u64, max_edges: usize) -> (RngStream, Arc<BasedGraph>) {
    let mut rng = RngStream::new(seed, 0);
    let g = Arc::new(BasedGraph::random(&mut rng, max_edges));
    (rng, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inserting_backtracks_keeps_the_hoop(seed in any::<u64>(), at in 0usize..32) {
        let (mut rng, g) = setup(seed, 6);
        let w = g.random_loop(&mut rng, 6);
        let mut letters = w.letters().to_vec();
        let pos = at % (letters.len() + 1);
        let e = rng.random_range(0..g.n_edges());
        // a spur e e⁻¹ or e⁻¹ e is only a path where it fits; try both
        for spur in [[Letter::fwd(e), Letter::bwd(e)], [Letter::bwd(e), Letter::fwd(e)]] {
            let mut padded = letters.clone();
            padded.splice(pos..pos, spur);
            if let Ok(r) = reduce_word(&g, &padded) {
                prop_assert_eq!(&r, &w);
            }
        }
        letters.clear();
    }

    #[test]
    fn holonomy_is_a_homomorphism(seed in any::<u64>()) {
        let (mut rng, g) = setup(seed, 6);
        let a = Connection::haar(g.clone(), Flavor::Su2, &mut rng);
        let x = g.random_loop(&mut rng, 5);
        let y = g.random_loop(&mut rng, 5);
        let lhs = holonomy_su2(&a, &compose(&x, &y).unwrap()).unwrap();
        let rhs = holonomy_su2(&a, &x).unwrap() * holonomy_su2(&a, &y).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-12);
        let inv = holonomy_su2(&a, &invert(&x)).unwrap();
        prop_assert!(inv.distance(&holonomy_su2(&a, &x).unwrap().inverse()) < 1e-12);
    }

    #[test]
    fn wilson_is_gauge_invariant(seed in any::<u64>()) {
        let (mut rng, g) = setup(seed, 8);
        let a = Connection::haar(g.clone(), Flavor::Su2, &mut rng);
        let t = GaugeTransform::haar(g.clone(), Flavor::Su2, &mut rng);
        let w = g.random_loop(&mut rng, 6);
        let b = gauge_act(&t, &a).unwrap();
        prop_assert!((wilson(&a, &w).unwrap() - wilson(&b, &w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn triple_phases_survive_subdivision(seed in any::<u64>(), t in 0.01f64..0.99) {
        let (mut rng, g) = setup(seed, 6);
        let field = TripleField::random(g.clone(), 1, (0.1, 2.0), (-1.0, 1.0), &mut rng).unwrap();
        let e = EdgeId(rng.random_range(0..g.n_edges()));
        let (refined, sub) = subdivide_triple(&field, e, t).unwrap();
        for _ in 0..5 {
            let w = g.random_loop(&mut rng, 6);
            let before = triple_phase(&field, &w).unwrap();
            let after = triple_phase(&refined, &sub.rewrite(&w)).unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn subdivided_graph_keeps_holonomies(seed in any::<u64>()) {
        let (mut rng, g) = setup(seed, 6);
        let a = Connection::haar(g.clone(), Flavor::Su2, &mut rng);
        let e = EdgeId(rng.random_range(0..g.n_edges()));
        let (refined, sub) = subdivide_edge(&g, e).unwrap();
        let first = hooploop_core::algebra::GroupElement::Su2(hooploop_core::algebra::haar_su2(&mut rng));
        let b = a.subdivide(Arc::new(refined), &sub, first).unwrap();
        let w = g.random_loop(&mut rng, 6);
        let h1 = holonomy_su2(&a, &w).unwrap();
        let h2 = holonomy_su2(&b, &sub.rewrite(&w)).unwrap();
        prop_assert!(h1.distance(&h2) < 1e-12);
    }

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>()) {
        let (mut rng, g) = setup(seed, 4);
        let f = random::mixed_function(&g, &mut rng, 2, 3, 2, 2);
        let h = random::mixed_function(&g, &mut rng, 2, 3, 2, 2);
        let x = PhasePoint::random(g.clone(), 3.0, 0, &mut rng);
        let a = poisson_bracket(&f, &h, &x, Differentiation::Analytic).unwrap();
        let b = poisson_bracket(&h, &f, &x, Differentiation::Analytic).unwrap();
        prop_assert_eq!(a, -b);
    }

    #[test]
    fn omega_is_antisymmetric(u1 in prop::collection::vec(-5.0f64..5.0, 6), w1 in prop::collection::vec(-5.0f64..5.0, 6),
                              u2 in prop::collection::vec(-5.0f64..5.0, 6), w2 in prop::collection::vec(-5.0f64..5.0, 6),
                              weights in prop::collection::vec(0.01f64..10.0, 6)) {
        let t1 = TripleTangent { u: u1, w: w1 };
        let t2 = TripleTangent { u: u2, w: w2 };
        prop_assert_eq!(symplectic_omega(&t1, &t2, &weights).unwrap(), -symplectic_omega(&t2, &t1, &weights).unwrap());
    }
}
