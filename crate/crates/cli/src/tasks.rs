//! Task execution. Every task is deterministic under its seed: sample `i`
//! draws from `RngStream::new(seed, 0).derive(i)` and per-sample results
//! are reduced in sample order.

use hooploop_core::algebra::{Flavor, RngStream};
use hooploop_core::connections::{
    gauge_act, holonomy_u1, sup_norm_refined, wilson, Connection, GaugeTransform,
};
use hooploop_core::cylfn::{check_consistency, integrate_cyl, Density, IntegrationOptions, Kernel};
use hooploop_core::hoops::{compose, invert, reduce_word, HoopWord};
use hooploop_core::phase::{
    derivation_nf, jacobi_sum, omega_rank, poisson_bracket, random as phase_random, symplectic_omega,
    Differentiation, PhaseFunction, PhasePoint, TripleTangent, FD_STEP,
};
use hooploop_core::triples::{p_alpha_complex, triple_phase, TripleField};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::report::{finite, TaskResult};
use crate::scenario::{PointSpec, Scenario, TaskSpec, WeightsSpec};

pub fn run_task(scenario: &Scenario, task: &TaskSpec) -> TaskResult {
    let (name, kind) = (task.name(), task.kind());
    let mut r = TaskResult::new(name, kind);
    let outcome = match task {
        TaskSpec::Integrate { function, density, n_samples, seed, exact, sigmas, .. } => {
            integrate(scenario, &mut r, function, density.as_deref(), *n_samples, *seed, *exact, *sigmas)
        }
        TaskSpec::ConsistencyCheck { function, density, plan, n_samples, seed, tolerance, .. } => {
            consistency(scenario, &mut r, function, density.as_deref(), plan, *n_samples, *seed, *tolerance)
        }
        TaskSpec::MandelstamCheck { n_samples, seed, loops, loop_steps, tolerance, .. } => {
            mandelstam(scenario, &mut r, *n_samples, *seed, loops.as_ref(), *loop_steps, *tolerance)
        }
        TaskSpec::GaugeInvarianceCheck { n_samples, seed, loops, loop_steps, tolerance, .. } => {
            gauge_invariance(scenario, &mut r, *n_samples, *seed, loops, *loop_steps, *tolerance)
        }
        TaskSpec::TripleHomomorphismCheck { n_samples, seed, loop_steps, tolerance, .. } => {
            triple_homomorphism(scenario, &mut r, *n_samples, *seed, *loop_steps, *tolerance)
        }
        TaskSpec::BracketEval { f, g, point, n_points, seed, range, tolerance, .. } => {
            bracket_eval(scenario, &mut r, f, g, *point, *n_points, *seed, *range, *tolerance)
        }
        TaskSpec::JacobiCheck { functions, n_samples, seed, range, tolerance, .. } => {
            jacobi(scenario, &mut r, functions.as_ref(), *n_samples, *seed, *range, *tolerance)
        }
        TaskSpec::DerivationNf { big_f, f, g, density, seed, range, tolerance, .. } => {
            nf(scenario, &mut r, big_f, f, g.as_deref(), density.as_deref(), *seed, *range, *tolerance)
        }
        TaskSpec::OmegaCheck { weights, n_samples, seed, tolerance, .. } => {
            omega(scenario, &mut r, *weights, *n_samples, *seed, *tolerance)
        }
        TaskSpec::SupNorm { function, n_samples, seed, rounds, .. } => {
            sup_norm(scenario, &mut r, function, *n_samples, *seed, *rounds)
        }
    };
    match outcome {
        Ok(()) => r,
        Err(e) => TaskResult::failed(name, kind, e),
    }
}

fn stream(seed: u64, i: usize) -> RngStream {
    RngStream::new(seed, 0).derive(i as u64)
}

/// Largest value, NaN-propagating, reduced in order.
fn max_in_order(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

fn within(max_dev: f64, tolerance: f64) -> bool {
    max_dev.is_finite() && max_dev <= tolerance
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    s: &Scenario,
    r: &mut TaskResult,
    function: &str,
    density: Option<&str>,
    n_samples: usize,
    seed: u64,
    exact: bool,
    sigmas: f64,
) -> Result<(), String> {
    let f = s.cyl_function(function).ok_or("not a cylindrical function")?;
    let rho = s.density(r.task.as_str(), density).map_err(err)?;
    let mut opts = IntegrationOptions::new(n_samples, seed);
    opts.exact = exact;
    let out = integrate_cyl(f, rho, &opts).map_err(err)?;
    r.estimate(out.estimate);
    r.stderr = finite(out.stderr);
    r.detail("n_samples", out.n_samples);
    match (out.exact, out.exact_unavailable) {
        (Some(x), _) => {
            let dev = (out.estimate - x).norm();
            r.max_dev = finite(dev);
            r.detail("exact_re", x.re);
            r.detail("exact_im", x.im);
            r.pass = dev <= sigmas * out.stderr + 1e-12;
        }
        (None, why) => {
            if let Some(why) = why {
                r.detail("exact_unavailable", why);
            }
            r.pass = out.estimate.re.is_finite() && out.estimate.im.is_finite() && out.stderr.is_finite();
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn consistency(
    s: &Scenario,
    r: &mut TaskResult,
    function: &str,
    density: Option<&str>,
    plan: &[String],
    n_samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<(), String> {
    let f = s.cyl_function(function).ok_or("not a cylindrical function")?;
    let rho = s.density(r.task.as_str(), density).map_err(err)?;
    let ids = s.resolve_plan(r.task.as_str(), plan).map_err(err)?;
    let report = check_consistency(f, rho, &ids, &IntegrationOptions::new(n_samples, seed)).map_err(err)?;
    let first = report.steps.first().map(|st| st.before);
    if let Some(v) = first {
        r.estimate(v);
    }
    let dev = report.max_delta();
    r.max_dev = finite(dev);
    r.detail("exact", report.exact);
    r.detail("steps", report.steps.len());
    r.pass = within(dev, tolerance);
    Ok(())
}

fn random_loop(s: &Scenario, rng: &mut RngStream, steps: usize) -> HoopWord {
    s.graph.random_loop(rng, steps)
}

fn mandelstam(
    s: &Scenario,
    r: &mut TaskResult,
    n_samples: usize,
    seed: u64,
    loops: Option<&[String; 2]>,
    loop_steps: usize,
    tolerance: f64,
) -> Result<(), String> {
    let fixed = loops
        .map(|[a, b]| -> Result<_, String> {
            let a = s.named_loop(r.task.as_str(), a).map_err(err)?.clone();
            let b = s.named_loop(r.task.as_str(), b).map_err(err)?.clone();
            Ok((a, b))
        })
        .transpose()?;
    let devs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<f64, String> {
            let mut rng = stream(seed, i);
            let a = Connection::haar(s.graph.clone(), Flavor::Su2, &mut rng);
            let (x, y) = match &fixed {
                Some(p) => p.clone(),
                None => (random_loop(s, &mut rng, loop_steps), random_loop(s, &mut rng, loop_steps)),
            };
            let t = |w: &HoopWord| wilson(&a, w).map_err(err);
            let lhs = t(&x)? * t(&y)?;
            let rhs = 0.5 * (t(&compose(&x, &y).map_err(err)?)? + t(&compose(&x, &invert(&y)).map_err(err)?)?);
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<_, _>>()?;
    let dev = max_in_order(devs);
    r.max_dev = finite(dev);
    r.detail("n_samples", n_samples);
    r.pass = within(dev, tolerance);
    Ok(())
}

fn gauge_invariance(
    s: &Scenario,
    r: &mut TaskResult,
    n_samples: usize,
    seed: u64,
    loops: &[String],
    loop_steps: usize,
    tolerance: f64,
) -> Result<(), String> {
    let named: Vec<HoopWord> =
        loops.iter().map(|n| s.named_loop(r.task.as_str(), n).cloned().map_err(err)).collect::<Result<_, _>>()?;
    let devs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<f64, String> {
            let mut rng = stream(seed, i);
            let a = match &s.connection {
                Some(a) => a.clone(),
                None => Connection::haar(s.graph.clone(), Flavor::Su2, &mut rng),
            };
            let g = GaugeTransform::haar(s.graph.clone(), a.flavor(), &mut rng);
            let b = gauge_act(&g, &a).map_err(err)?;
            let words = if named.is_empty() { vec![random_loop(s, &mut rng, loop_steps)] } else { named.clone() };
            let mut worst: f64 = 0.0;
            for w in &words {
                let d = match a.flavor() {
                    Flavor::Su2 => (wilson(&a, w).map_err(err)? - wilson(&b, w).map_err(err)?).abs(),
                    Flavor::U1 => holonomy_u1(&a, w).map_err(err)?.distance(&holonomy_u1(&b, w).map_err(err)?),
                };
                worst = worst.max(d);
            }
            Ok(worst)
        })
        .collect::<Result<_, _>>()?;
    let dev = max_in_order(devs);
    r.max_dev = finite(dev);
    r.detail("flavor", s.connection.as_ref().map_or(Flavor::Su2, Connection::flavor).to_string());
    r.pass = within(dev, tolerance);
    Ok(())
}

/// Worst deviation among the `P_α` identities for one loop pair.
pub fn triple_identities(field: &TripleField, x: &HoopWord, y: &HoopWord) -> Result<f64, String> {
    let p = |w: &HoopWord| p_alpha_complex(field, w).map_err(err);
    let (px, py) = (p(x)?, p(y)?);
    let unit = (px.norm() - 1.0).abs();
    let product = (p(&compose(x, y).map_err(err)?)? - px * py).norm();
    let conj = (p(&invert(x))? - px.conj()).norm();
    // a spur at the basepoint reduces away
    let mut padded = x.letters().to_vec();
    if let Some(&l) = y.letters().first() {
        padded.splice(0..0, [l, l.inverse()]);
    }
    let reduced = reduce_word(field.graph(), &padded).map_err(err)?;
    let reduction = (triple_phase(field, &reduced).map_err(err)? - triple_phase(field, x).map_err(err)?).abs();
    Ok(unit.max(product).max(conj).max(reduction))
}

fn triple_homomorphism(
    s: &Scenario,
    r: &mut TaskResult,
    n_samples: usize,
    seed: u64,
    loop_steps: usize,
    tolerance: f64,
) -> Result<(), String> {
    let devs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<f64, String> {
            let mut rng = stream(seed, i);
            let field = match &s.triple_field {
                Some(t) => t.clone(),
                None => TripleField::random(s.graph.clone(), 0, (0.1, 2.0), (-1.0, 1.0), &mut rng).map_err(err)?,
            };
            let x = random_loop(s, &mut rng, loop_steps);
            let y = random_loop(s, &mut rng, loop_steps);
            triple_identities(&field, &x, &y)
        })
        .collect::<Result<_, _>>()?;
    let dev = max_in_order(devs);
    r.max_dev = finite(dev);
    r.pass = within(dev, tolerance);
    Ok(())
}

fn random_point(s: &Scenario, seed: u64, i: usize, range: f64) -> PhasePoint {
    let k = s.triple_field.as_ref().map_or(0, TripleField::k_class);
    PhasePoint::random(s.graph.clone(), range, k, &mut stream(seed, i))
}

/// `|a − b| / max(|a|, 1)`.
pub fn relative_error(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

#[allow(clippy::too_many_arguments)]
fn bracket_eval(
    s: &Scenario,
    r: &mut TaskResult,
    f: &str,
    g: &str,
    point: PointSpec,
    n_points: usize,
    seed: u64,
    range: f64,
    tolerance: f64,
) -> Result<(), String> {
    let entity = r.task.clone();
    let f = s.phase_function(&entity, f).map_err(err)?;
    let g = s.phase_function(&entity, g).map_err(err)?;
    let points: Vec<PhasePoint> = (0..n_points)
        .map(|i| -> Result<PhasePoint, String> {
            if i == 0 && point == PointSpec::Scenario {
                let (a, t) = s.scenario_point_parts(&entity).map_err(err)?;
                PhasePoint::from_parts(a, t).map_err(err)
            } else {
                Ok(random_point(s, seed, i, range))
            }
        })
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(Complex64, Complex64)> = points
        .par_iter()
        .map(|x| -> Result<_, String> {
            let a = poisson_bracket(&f, &g, x, Differentiation::Analytic).map_err(err)?;
            let b = poisson_bracket(&f, &g, x, Differentiation::Central { h: FD_STEP }).map_err(err)?;
            Ok((a, b))
        })
        .collect::<Result<_, _>>()?;
    r.estimate(pairs[0].0);
    let dev = max_in_order(pairs.iter().map(|&(a, b)| relative_error(a, b)));
    r.max_dev = finite(dev);
    r.detail("fd_re", pairs[0].1.re);
    r.detail("fd_im", pairs[0].1.im);
    r.detail("n_points", n_points);
    r.pass = within(dev, tolerance);
    Ok(())
}

fn jacobi(
    s: &Scenario,
    r: &mut TaskResult,
    functions: Option<&[String; 3]>,
    n_samples: usize,
    seed: u64,
    range: f64,
    tolerance: f64,
) -> Result<(), String> {
    let entity = r.task.clone();
    let named = functions
        .map(|names| -> Result<Vec<PhaseFunction>, String> {
            names.iter().map(|n| s.phase_function(&entity, n).map_err(err)).collect()
        })
        .transpose()?;
    let devs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<f64, String> {
            let x = random_point(s, seed, i, range);
            let sum = match &named {
                Some(fs) => jacobi_sum(&fs[0], &fs[1], &fs[2], &x),
                None => {
                    let mut rng = stream(seed, i).derive(1);
                    let fs: Vec<PhaseFunction> =
                        (0..3).map(|_| phase_random::mixed_function(&s.graph, &mut rng, 2, 4, 2, 2)).collect();
                    jacobi_sum(&fs[0], &fs[1], &fs[2], &x)
                }
            };
            sum.map(|z| z.norm()).map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let dev = max_in_order(devs);
    r.max_dev = finite(dev);
    r.detail("random_functions", named.is_none());
    r.pass = within(dev, tolerance);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn nf(
    s: &Scenario,
    r: &mut TaskResult,
    big_f: &str,
    f: &str,
    g: Option<&str>,
    density: Option<&str>,
    seed: u64,
    range: f64,
    tolerance: f64,
) -> Result<(), String> {
    let entity = r.task.clone();
    let big_f = s.phase_function(&entity, big_f).map_err(err)?;
    let f = s.phase_function(&entity, f).map_err(err)?;
    let uniform = Density::uniform(s.graph.clone());
    let rho = s.density(&entity, density).map_err(err)?.unwrap_or(&uniform);
    let nf_f = derivation_nf(&big_f, &f, rho).map_err(err)?;
    let x = random_point(s, seed, 0, range);
    r.estimate(nf_f.eval(&x).map_err(err)?);
    let poly = nf_f.poly().map_err(err)?;
    r.detail("n_terms", poly.len());
    r.detail("uniform_density", rho.is_uniform());
    let mut dev = 0.0;
    if let Some(g) = g {
        let g = s.phase_function(&entity, g).map_err(err)?;
        let nf_g = derivation_nf(&big_f, &g, rho).map_err(err)?;
        let lhs = derivation_nf(&big_f, &f.mul(&g).map_err(err)?, rho).map_err(err)?;
        let rhs = nf_f.mul(&g).map_err(err)?.add(&f.mul(&nf_g).map_err(err)?).map_err(err)?;
        dev = lhs.poly().map_err(err)?.max_coeff_diff(rhs.poly().map_err(err)?);
        r.max_dev = finite(dev);
    }
    r.pass = within(dev, tolerance) && (!rho.is_uniform() || poly.is_zero());
    Ok(())
}

fn omega(
    s: &Scenario,
    r: &mut TaskResult,
    weights: WeightsSpec,
    n_samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<(), String> {
    let n = s.n_edges();
    let w: Vec<f64> = match weights {
        WeightsSpec::Areas => s.triple_field.as_ref().ok_or("no triple field")?.tubes().iter().map(|t| t.area).collect(),
        WeightsSpec::Random => {
            let mut rng = stream(seed, usize::MAX);
            (0..n).map(|_| rng.random_range(0.1..10.0)).collect()
        }
    };
    let tangent = |rng: &mut RngStream| TripleTangent {
        u: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        w: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let values: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<_, String> {
            let mut rng = stream(seed, i);
            let (a, b) = (tangent(&mut rng), tangent(&mut rng));
            let ab = symplectic_omega(&a, &b, &w).map_err(err)?;
            let ba = symplectic_omega(&b, &a, &w).map_err(err)?;
            Ok((ab, (ab + ba).abs()))
        })
        .collect::<Result<_, _>>()?;
    if let Some(&(v, _)) = values.first() {
        r.estimate(Complex64::new(v, 0.0));
    }
    let dev = max_in_order(values.iter().map(|p| p.1));
    let rank = omega_rank(&w);
    r.max_dev = finite(dev);
    r.detail("rank", rank);
    r.detail("expected_rank", 2 * n);
    r.pass = within(dev, tolerance) && rank == 2 * n;
    Ok(())
}

fn sup_norm(s: &Scenario, r: &mut TaskResult, function: &str, n_samples: usize, seed: u64, rounds: usize) -> Result<(), String> {
    let f = s.cyl_function(function).ok_or("not a cylindrical function")?;
    let Kernel::Wilson(poly) = f.kernel() else {
        return Err("sup-norm needs a Wilson function".into());
    };
    let x = poly.to_algebra(f.loops());
    let value = sup_norm_refined(&x, &s.graph, n_samples, &RngStream::new(seed, 0), rounds).map_err(err)?;
    let bound = x.coefficient_bound();
    r.estimate(Complex64::new(value, 0.0));
    r.detail("coefficient_bound", bound);
    r.pass = value.is_finite() && value <= bound + 1e-12;
    Ok(())
}
