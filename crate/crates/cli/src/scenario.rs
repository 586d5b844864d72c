//! Scenario files: the JSON layout, loading, and validation against the
//! graph they describe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use hooploop_core::algebra::{Flavor, GroupElement, RngStream, SU2, U1};
use hooploop_core::connections::{Connection, ConnectionError, Links};
use hooploop_core::cylfn::{
    CylError, CylFunction, Density, FourierMonomial, FourierPoly, Kernel, Side, WilsonMonomial, WilsonPoly,
};
use hooploop_core::hoops::{subdivide_edge, BasedGraph, EdgeId, HoopError, HoopWord};
use hooploop_core::phase::{PhaseError, PhaseFunction};
use hooploop_core::triples::{Orientation, TripleError, TripleField, TubeData};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{entity}: {reason}")]
    Validation { entity: String, reason: Reason },
}

/// Why a scenario entity was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Reason {
    Hoop(HoopError),
    Cyl(CylError),
    Phase(PhaseError),
    Triple(TripleError),
    Connection(ConnectionError),
    /// A reference to a name that is not defined.
    Unresolved { what: &'static str, name: String },
    Invalid(String),
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Hoop(e) => write!(f, "{e}"),
            Reason::Cyl(e) => write!(f, "{e}"),
            Reason::Phase(e) => write!(f, "{e}"),
            Reason::Triple(e) => write!(f, "{e}"),
            Reason::Connection(e) => write!(f, "{e}"),
            Reason::Unresolved { what, name } => write!(f, "unknown {what} `{name}`"),
            Reason::Invalid(msg) => f.write_str(msg),
        }
    }
}

macro_rules! reason_from {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for Reason {
            fn from(e: $ty) -> Self {
                Reason::$variant(e)
            }
        })*
    };
}

reason_from!(Hoop(HoopError), Cyl(CylError), Phase(PhaseError), Triple(TripleError), Connection(ConnectionError));

fn invalid(entity: impl Into<String>, reason: impl Into<Reason>) -> ScenarioError {
    ScenarioError::Validation { entity: entity.into(), reason: reason.into() }
}

fn unresolved(entity: impl Into<String>, what: &'static str, name: &str) -> ScenarioError {
    invalid(entity, Reason::Unresolved { what, name: name.to_string() })
}

// ---------------------------------------------------------------------------
// JSON layout

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub graph: GraphSpec,
    /// Named loop words in the `e1 e2^-1` grammar.
    #[serde(default)]
    pub loops: BTreeMap<String, String>,
    #[serde(default)]
    pub connection: Option<ConnectionSpec>,
    #[serde(default)]
    pub triple_field: Option<TripleFieldSpec>,
    #[serde(default)]
    pub functions: BTreeMap<String, FunctionSpec>,
    #[serde(default)]
    pub densities: BTreeMap<String, DensitySpec>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    pub basepoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlavorSpec {
    Su2,
    U1,
}

impl From<FlavorSpec> for Flavor {
    fn from(f: FlavorSpec) -> Flavor {
        match f {
            FlavorSpec::Su2 => Flavor::Su2,
            FlavorSpec::U1 => Flavor::U1,
        }
    }
}

/// A U(1) angle or an SU(2) quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkValue {
    Angle(f64),
    Quaternion([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConnectionSpec {
    Haar {
        flavor: FlavorSpec,
        #[serde(default)]
        seed: u64,
    },
    /// One link per edge id.
    Explicit { flavor: FlavorSpec, links: BTreeMap<String, LinkValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub area: f64,
    pub flux: f64,
    /// `+1` or `-1`.
    pub orient: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TripleFieldSpec {
    Random {
        #[serde(default)]
        k: i64,
        area: [f64; 2],
        flux: [f64; 2],
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        #[serde(default)]
        k: i64,
        /// Enforce `|flux| ≤ area` on every edge.
        #[serde(default)]
        strict: bool,
        tubes: BTreeMap<String, TubeSpec>,
    },
}

/// A real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Real(f64),
    Complex([f64; 2]),
}

impl Coeff {
    pub fn value(self) -> Complex64 {
        match self {
            Coeff::Real(x) => Complex64::new(x, 0.0),
            Coeff::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WilsonTermSpec {
    pub coeff: Coeff,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTermSpec {
    pub coeff: Coeff,
    pub modes: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSpec {
    Connection,
    Triple,
}

impl From<SideSpec> for Side {
    fn from(s: SideSpec) -> Side {
        match s {
            SideSpec::Connection => Side::Connection,
            SideSpec::Triple => Side::Triple,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    P,
    Q,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateMap {
    #[default]
    Identity,
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// Polynomial in the Wilson functions of `loops` (connection side).
    Wilson { loops: Vec<String>, terms: Vec<WilsonTermSpec> },
    /// Trigonometric polynomial in the U(1) angles of `loops`.
    Fourier { side: SideSpec, loops: Vec<String>, terms: Vec<FourierTermSpec> },
    /// A phase-space coordinate of one edge, optionally through cos or sin.
    Coordinate {
        block: Block,
        edge: String,
        #[serde(default)]
        map: CoordinateMap,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub loops: Vec<String>,
    pub terms: Vec<FourierTermSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointSpec {
    /// The point built from the scenario's U(1) connection and triple field.
    Scenario,
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsSpec {
    /// The tube areas of the scenario's triple field.
    Areas,
    #[default]
    Random,
}

fn d_samples() -> usize {
    10_000
}
fn d_points() -> usize {
    16
}
fn d_jacobi_samples() -> usize {
    1_000
}
fn d_steps() -> usize {
    6
}
fn d_sigmas() -> f64 {
    4.0
}
fn d_exact_tol() -> f64 {
    1e-12
}
fn d_fd_tol() -> f64 {
    1e-6
}
fn d_jacobi_tol() -> f64 {
    1e-8
}
fn d_range() -> f64 {
    3.0
}
fn d_sup_samples() -> usize {
    1_000
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Integrate {
        name: String,
        function: String,
        #[serde(default)]
        density: Option<String>,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        /// Also compute the exact integral when the kernel allows it.
        #[serde(default = "d_true")]
        exact: bool,
        /// Allowed Monte-Carlo deviation from the exact value, in standard errors.
        #[serde(default = "d_sigmas")]
        sigmas: f64,
    },
    ConsistencyCheck {
        name: String,
        function: String,
        #[serde(default)]
        density: Option<String>,
        /// Edge ids to subdivide in turn, each naming an edge of the graph
        /// refined by the steps before it.
        plan: Vec<String>,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "d_exact_tol")]
        tolerance: f64,
    },
    MandelstamCheck {
        name: String,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        /// A fixed pair of named loops; random loops when absent.
        #[serde(default)]
        loops: Option<[String; 2]>,
        #[serde(default = "d_steps")]
        loop_steps: usize,
        #[serde(default = "d_exact_tol")]
        tolerance: f64,
    },
    GaugeInvarianceCheck {
        name: String,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        loops: Vec<String>,
        #[serde(default = "d_steps")]
        loop_steps: usize,
        #[serde(default = "d_exact_tol")]
        tolerance: f64,
    },
    TripleHomomorphismCheck {
        name: String,
        #[serde(default = "d_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "d_steps")]
        loop_steps: usize,
        #[serde(default = "d_exact_tol")]
        tolerance: f64,
    },
    BracketEval {
        name: String,
        f: String,
        g: String,
        #[serde(default)]
        point: PointSpec,
        #[serde(default = "d_points")]
        n_points: usize,
        #[serde(default)]
        seed: u64,
        /// Random coordinates are drawn from `[-range, range]`.
        #[serde(default = "d_range")]
        range: f64,
        /// Bound on the analytic vs finite-difference relative error.
        #[serde(default = "d_fd_tol")]
        tolerance: f64,
    },
    JacobiCheck {
        name: String,
        /// Three named functions; random ones when absent.
        #[serde(default)]
        functions: Option<[String; 3]>,
        #[serde(default = "d_jacobi_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "d_range")]
        range: f64,
        #[serde(default = "d_jacobi_tol")]
        tolerance: f64,
    },
    DerivationNf {
        name: String,
        /// The triple-side function `F`.
        big_f: String,
        /// The connection-side argument.
        f: String,
        /// Second argument for the Leibniz check.
        #[serde(default)]
        g: Option<String>,
        /// A named density; uniform when absent.
        #[serde(default)]
        density: Option<String>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "d_range")]
        range: f64,
        #[serde(default = "d_exact_tol")]
        tolerance: f64,
    },
    OmegaCheck {
        name: String,
        #[serde(default)]
        weights: WeightsSpec,
        #[serde(default = "d_jacobi_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        tolerance: f64,
    },
    SupNorm {
        name: String,
        function: String,
        #[serde(default = "d_sup_samples")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
        /// Coordinate-ascent rounds after sampling.
        #[serde(default)]
        rounds: usize,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &str {
        match self {
            TaskSpec::Integrate { name, .. }
            | TaskSpec::ConsistencyCheck { name, .. }
            | TaskSpec::MandelstamCheck { name, .. }
            | TaskSpec::GaugeInvarianceCheck { name, .. }
            | TaskSpec::TripleHomomorphismCheck { name, .. }
            | TaskSpec::BracketEval { name, .. }
            | TaskSpec::JacobiCheck { name, .. }
            | TaskSpec::DerivationNf { name, .. }
            | TaskSpec::OmegaCheck { name, .. }
            | TaskSpec::SupNorm { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Integrate { .. } => "integrate",
            TaskSpec::ConsistencyCheck { .. } => "consistency-check",
            TaskSpec::MandelstamCheck { .. } => "mandelstam-check",
            TaskSpec::GaugeInvarianceCheck { .. } => "gauge-invariance-check",
            TaskSpec::TripleHomomorphismCheck { .. } => "triple-homomorphism-check",
            TaskSpec::BracketEval { .. } => "bracket-eval",
            TaskSpec::JacobiCheck { .. } => "jacobi-check",
            TaskSpec::DerivationNf { .. } => "derivation-nf",
            TaskSpec::OmegaCheck { .. } => "omega-check",
            TaskSpec::SupNorm { .. } => "sup-norm",
        }
    }

    fn seed_mut(&mut self) -> &mut u64 {
        match self {
            TaskSpec::Integrate { seed, .. }
            | TaskSpec::ConsistencyCheck { seed, .. }
            | TaskSpec::MandelstamCheck { seed, .. }
            | TaskSpec::GaugeInvarianceCheck { seed, .. }
            | TaskSpec::TripleHomomorphismCheck { seed, .. }
            | TaskSpec::BracketEval { seed, .. }
            | TaskSpec::JacobiCheck { seed, .. }
            | TaskSpec::DerivationNf { seed, .. }
            | TaskSpec::OmegaCheck { seed, .. }
            | TaskSpec::SupNorm { seed, .. } => seed,
        }
    }
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Replaces every seed in the file: task seeds and the seeds of random
    /// connections and triple fields.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(ConnectionSpec::Haar { seed: s, .. }) = &mut self.connection {
            *s = seed;
        }
        if let Some(TripleFieldSpec::Random { seed: s, .. }) = &mut self.triple_field {
            *s = seed;
        }
        for t in &mut self.tasks {
            *t.seed_mut() = seed;
        }
    }
}

// ---------------------------------------------------------------------------
// Resolved scenario

/// A named function, either cylindrical or a phase-space coordinate.
#[derive(Debug, Clone)]
pub enum ScenarioFunction {
    Cyl(CylFunction),
    Phase(PhaseFunction),
}

impl ScenarioFunction {
    /// The function on the phase space, if it has a U(1) form there.
    pub fn to_phase(&self) -> Result<PhaseFunction, PhaseError> {
        match self {
            ScenarioFunction::Cyl(f) => PhaseFunction::from_cyl(f),
            ScenarioFunction::Phase(f) => Ok(f.clone()),
        }
    }
}

/// A validated scenario: every name resolves and every loop lives on the graph.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub graph: Arc<BasedGraph>,
    pub loops: BTreeMap<String, HoopWord>,
    pub connection: Option<Connection>,
    pub triple_field: Option<TripleField>,
    pub functions: BTreeMap<String, ScenarioFunction>,
    pub densities: BTreeMap<String, Density>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    load_scenario_with_seed(path, None)
}

pub fn load_scenario_with_seed(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_json(&text, seed)
}

impl Scenario {
    pub fn from_json(text: &str, seed: Option<u64>) -> Result<Self, ScenarioError> {
        let mut spec = ScenarioSpec::from_json(text)?;
        if let Some(s) = seed {
            spec.override_seed(s);
        }
        Scenario::resolve(spec)
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.spec.tasks
    }

    pub fn resolve(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        if spec.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                Reason::Invalid(format!("unsupported version {}, expected {SCHEMA_VERSION}", spec.schema_version)),
            ));
        }
        let g = &spec.graph;
        let edges: Vec<(&str, &str, &str)> =
            g.edges.iter().map(|e| (e.id.as_str(), e.source.as_str(), e.target.as_str())).collect();
        let graph = Arc::new(BasedGraph::new(&g.vertices.iter().map(String::as_str).collect::<Vec<_>>(), &edges, &g.basepoint)
            .map_err(|e| invalid("graph", e))?);

        let mut loops = BTreeMap::new();
        for (name, text) in &spec.loops {
            let w = graph.parse_word(text).map_err(|e| invalid(format!("loop `{name}`"), e))?;
            loops.insert(name.clone(), w);
        }

        let connection = spec.connection.as_ref().map(|c| resolve_connection(&graph, c)).transpose()?;
        let triple_field = spec.triple_field.as_ref().map(|t| resolve_triple(&graph, t)).transpose()?;

        let lookup_loops = |entity: &str, names: &[String]| -> Result<Vec<HoopWord>, ScenarioError> {
            names.iter().map(|n| loops.get(n).cloned().ok_or_else(|| unresolved(entity, "loop", n))).collect()
        };

        let mut functions = BTreeMap::new();
        for (name, f) in &spec.functions {
            let entity = format!("function `{name}`");
            let resolved = match f {
                FunctionSpec::Wilson { loops: names, terms } => {
                    let kernel = Kernel::Wilson(WilsonPoly {
                        terms: terms.iter().map(|t| WilsonMonomial { coeff: t.coeff.value(), powers: t.powers.clone() }).collect(),
                    });
                    let ws = lookup_loops(&entity, names)?;
                    ScenarioFunction::Cyl(CylFunction::new(graph.clone(), Side::Connection, ws, kernel).map_err(|e| invalid(&entity, e))?)
                }
                FunctionSpec::Fourier { side, loops: names, terms } => {
                    let ws = lookup_loops(&entity, names)?;
                    let kernel = Kernel::Fourier(fourier_poly(terms));
                    ScenarioFunction::Cyl(CylFunction::new(graph.clone(), (*side).into(), ws, kernel).map_err(|e| invalid(&entity, e))?)
                }
                FunctionSpec::Coordinate { block, edge, map } => {
                    let id = graph.edge_id(edge).ok_or_else(|| unresolved(&entity, "edge", edge))?;
                    let coord = match block {
                        Block::P => PhaseFunction::p_coord(graph.clone(), id.0),
                        Block::Q => PhaseFunction::q_coord(graph.clone(), id.0),
                        Block::S => PhaseFunction::s_coord(graph.clone(), id.0),
                    }
                    .map_err(|e| invalid(&entity, e))?;
                    let mapped = match map {
                        CoordinateMap::Identity => Ok(coord),
                        CoordinateMap::Cos => coord.cos_of(),
                        CoordinateMap::Sin => coord.sin_of(),
                    };
                    ScenarioFunction::Phase(mapped.map_err(|e| invalid(&entity, e))?)
                }
            };
            functions.insert(name.clone(), resolved);
        }

        let mut densities = BTreeMap::new();
        for (name, d) in &spec.densities {
            let entity = format!("density `{name}`");
            let ws = lookup_loops(&entity, &d.loops)?;
            let rho = Density::new(graph.clone(), ws, fourier_poly(&d.terms)).map_err(|e| invalid(&entity, e))?;
            densities.insert(name.clone(), rho);
        }

        let scenario = Scenario { spec: spec.clone(), graph, loops, connection, triple_field, functions, densities };
        let mut seen = BTreeSet::new();
        for task in &spec.tasks {
            if !seen.insert(task.name()) {
                return Err(invalid(format!("task `{}`", task.name()), Reason::Invalid("duplicate task name".into())));
            }
            scenario.validate_task(task)?;
        }
        Ok(scenario)
    }

    fn cyl(&self, entity: &str, name: &str) -> Result<&CylFunction, ScenarioError> {
        match self.functions.get(name) {
            Some(ScenarioFunction::Cyl(f)) => Ok(f),
            Some(ScenarioFunction::Phase(_)) => {
                Err(invalid(entity, Reason::Invalid(format!("function `{name}` is not cylindrical"))))
            }
            None => Err(unresolved(entity, "function", name)),
        }
    }

    /// The named function on the phase space.
    pub fn phase_function(&self, entity: &str, name: &str) -> Result<PhaseFunction, ScenarioError> {
        let f = self.functions.get(name).ok_or_else(|| unresolved(entity, "function", name))?;
        f.to_phase().map_err(|e| invalid(format!("{entity}, function `{name}`"), e))
    }

    /// The named cylindrical function.
    pub fn cyl_function(&self, name: &str) -> Option<&CylFunction> {
        match self.functions.get(name) {
            Some(ScenarioFunction::Cyl(f)) => Some(f),
            _ => None,
        }
    }

    /// `None` is the uniform density.
    pub fn density(&self, entity: &str, name: Option<&str>) -> Result<Option<&Density>, ScenarioError> {
        name.map(|n| self.densities.get(n).ok_or_else(|| unresolved(entity, "density", n))).transpose()
    }

    fn validate_task(&self, task: &TaskSpec) -> Result<(), ScenarioError> {
        let entity = format!("task `{}`", task.name());
        let entity = entity.as_str();
        let bad = |msg: &str| Err(invalid(entity, Reason::Invalid(msg.to_string())));
        match task {
            TaskSpec::Integrate { function, density, n_samples, sigmas, .. } => {
                self.cyl(entity, function)?;
                self.density(entity, density.as_deref())?;
                if *n_samples < 2 {
                    return bad("n_samples must be at least 2");
                }
                if !(sigmas.is_finite() && *sigmas >= 0.0) {
                    return bad("sigmas must be finite and non-negative");
                }
            }
            TaskSpec::ConsistencyCheck { function, density, plan, .. } => {
                self.cyl(entity, function)?;
                self.density(entity, density.as_deref())?;
                self.resolve_plan(entity, plan)?;
            }
            TaskSpec::MandelstamCheck { loops, .. } => {
                if let Some(pair) = loops {
                    for n in pair {
                        self.named_loop(entity, n)?;
                    }
                }
            }
            TaskSpec::GaugeInvarianceCheck { loops, .. } => {
                for n in loops {
                    self.named_loop(entity, n)?;
                }
            }
            TaskSpec::TripleHomomorphismCheck { .. } => {}
            TaskSpec::BracketEval { f, g, point, n_points, .. } => {
                self.phase_function(entity, f)?;
                self.phase_function(entity, g)?;
                if *n_points == 0 {
                    return bad("n_points must be positive");
                }
                if *point == PointSpec::Scenario {
                    self.scenario_point_parts(entity)?;
                }
            }
            TaskSpec::JacobiCheck { functions, .. } => {
                for n in functions.iter().flatten() {
                    self.phase_function(entity, n)?;
                }
            }
            TaskSpec::DerivationNf { big_f, f, g, density, .. } => {
                self.phase_function(entity, big_f)?;
                self.phase_function(entity, f)?;
                if let Some(g) = g {
                    self.phase_function(entity, g)?;
                }
                self.density(entity, density.as_deref())?;
            }
            TaskSpec::OmegaCheck { weights, .. } => {
                if *weights == WeightsSpec::Areas && self.triple_field.is_none() {
                    return bad("weights `areas` need a triple_field");
                }
            }
            TaskSpec::SupNorm { function, n_samples, .. } => {
                let f = self.cyl(entity, function)?;
                if !matches!(f.kernel(), Kernel::Wilson(_)) {
                    return bad("sup-norm needs a Wilson function");
                }
                if *n_samples == 0 {
                    return bad("n_samples must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn named_loop(&self, entity: &str, name: &str) -> Result<&HoopWord, ScenarioError> {
        self.loops.get(name).ok_or_else(|| unresolved(entity, "loop", name))
    }

    /// The scenario connection and triple field, checked to form a phase point.
    pub fn scenario_point_parts(&self, entity: &str) -> Result<(&Connection, &TripleField), ScenarioError> {
        match (&self.connection, &self.triple_field) {
            (Some(a), Some(t)) if a.flavor() == Flavor::U1 => Ok((a, t)),
            _ => Err(invalid(entity, Reason::Invalid("point `scenario` needs a U(1) connection and a triple_field".into()))),
        }
    }

    /// Edge ids of a subdivision plan, each looked up in the graph refined
    /// by the preceding steps.
    pub fn resolve_plan(&self, entity: &str, plan: &[String]) -> Result<Vec<EdgeId>, ScenarioError> {
        let mut g = (*self.graph).clone();
        let mut ids = Vec::with_capacity(plan.len());
        for name in plan {
            let id = g.edge_id(name).ok_or_else(|| unresolved(entity, "plan edge", name))?;
            g = subdivide_edge(&g, id).map_err(|e| invalid(entity, e))?.0;
            ids.push(id);
        }
        Ok(ids)
    }
}

fn fourier_poly(terms: &[FourierTermSpec]) -> FourierPoly {
    FourierPoly { terms: terms.iter().map(|t| FourierMonomial { coeff: t.coeff.value(), modes: t.modes.clone() }).collect() }
}

fn resolve_connection(graph: &Arc<BasedGraph>, spec: &ConnectionSpec) -> Result<Connection, ScenarioError> {
    match spec {
        ConnectionSpec::Haar { flavor, seed } => {
            Ok(Connection::haar(graph.clone(), (*flavor).into(), &mut RngStream::new(*seed, 0)))
        }
        ConnectionSpec::Explicit { flavor, links } => {
            for id in links.keys() {
                if graph.edge_id(id).is_none() {
                    return Err(unresolved("connection", "edge", id));
                }
            }
            let mut values = Vec::with_capacity(graph.n_edges());
            for e in graph.edges() {
                let entity = format!("connection link `{}`", e.name);
                let v = links.get(&e.name).ok_or_else(|| invalid(&entity, Reason::Invalid("missing link".into())))?;
                let g = match (flavor, v) {
                    (FlavorSpec::U1, LinkValue::Angle(t)) if t.is_finite() => GroupElement::U1(U1::from_angle(*t)),
                    (FlavorSpec::Su2, LinkValue::Quaternion([w, x, y, z])) => GroupElement::Su2(
                        SU2::new(*w, *x, *y, *z).map_err(|e| invalid(&entity, Reason::Invalid(e.to_string())))?,
                    ),
                    _ => return Err(invalid(&entity, Reason::Invalid(format!("not a finite {} value", Flavor::from(*flavor))))),
                };
                values.push(g);
            }
            let links = match flavor {
                FlavorSpec::U1 => Links::U1(values.iter().map(|g| g.as_u1().expect("u1")).collect()),
                FlavorSpec::Su2 => Links::Su2(values.iter().map(|g| g.as_su2().expect("su2")).collect()),
            };
            Connection::new(graph.clone(), links).map_err(|e| invalid("connection", e))
        }
    }
}

fn resolve_triple(graph: &Arc<BasedGraph>, spec: &TripleFieldSpec) -> Result<TripleField, ScenarioError> {
    match spec {
        TripleFieldSpec::Random { k, area, flux, seed } => {
            if !(area[0] > 0.0 && area[1] >= area[0] && area[1].is_finite()) {
                return Err(invalid("triple_field", Reason::Invalid("area range must be positive and ordered".into())));
            }
            if !(flux[1] >= flux[0] && flux[0].is_finite() && flux[1].is_finite()) {
                return Err(invalid("triple_field", Reason::Invalid("flux range must be finite and ordered".into())));
            }
            let mut rng = RngStream::new(*seed, 0);
            TripleField::random(graph.clone(), *k, (area[0], area[1]), (flux[0], flux[1]), &mut rng)
                .map_err(|e| invalid("triple_field", e))
        }
        TripleFieldSpec::Explicit { k, strict, tubes } => {
            for id in tubes.keys() {
                if graph.edge_id(id).is_none() {
                    return Err(unresolved("triple_field", "edge", id));
                }
            }
            let mut data = Vec::with_capacity(graph.n_edges());
            for e in graph.edges() {
                let entity = format!("triple_field tube `{}`", e.name);
                let t = tubes.get(&e.name).ok_or_else(|| invalid(&entity, Reason::Invalid("missing tube".into())))?;
                let orient = Orientation::from_sign(t.orient)
                    .ok_or_else(|| invalid(&entity, Reason::Invalid("orient must be +1 or -1".into())))?;
                data.push(TubeData { area: t.area, flux: t.flux, orient });
            }
            TripleField::new(graph.clone(), data, *k, *strict).map_err(|e| invalid("triple_field", e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "graph": {"vertices": ["v"], "edges": [{"id": "e1", "source": "v", "target": "v"}], "basepoint": "v"},
        "loops": {"a": "e1"}
    }"#;

    #[test]
    fn minimal_file_loads() {
        let s = Scenario::from_json(MINIMAL, None).unwrap();
        assert_eq!(s.n_edges(), 1);
        assert_eq!(s.loops["a"].len(), 1);
        assert!(s.tasks().is_empty());
    }

    #[test]
    fn parse_error_has_position() {
        let err = Scenario::from_json("{\n  \"schema_version\": 1,\n  oops\n}", None).unwrap_err();
        match err {
            ScenarioError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        let err = Scenario::from_json(&text, None).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation { ref entity, .. } if entity == "schema_version"));
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut spec = ScenarioSpec::from_json(MINIMAL).unwrap();
        spec.connection = Some(ConnectionSpec::Haar { flavor: FlavorSpec::Su2, seed: 1 });
        spec.tasks.push(TaskSpec::SupNorm { name: "t".into(), function: "f".into(), n_samples: 1, seed: 3, rounds: 0 });
        spec.override_seed(99);
        assert_eq!(spec.connection, Some(ConnectionSpec::Haar { flavor: FlavorSpec::Su2, seed: 99 }));
        assert!(matches!(spec.tasks[0], TaskSpec::SupNorm { seed: 99, .. }));
    }

    #[test]
    fn plan_ids_follow_the_refinement() {
        let s = Scenario::from_json(MINIMAL, None).unwrap();
        let ids = s.resolve_plan("t", &["e1".into(), "e1.1".into(), "e1.0".into()]).unwrap();
        assert_eq!(ids, vec![EdgeId(0), EdgeId(1), EdgeId(0)]);
        let err = s.resolve_plan("t", &["e1".into(), "e1".into()]).unwrap_err();
        assert!(err.to_string().contains("e1"));
    }
}
