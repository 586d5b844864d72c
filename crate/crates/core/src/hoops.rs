//! Finite based graphs and hoop words.
//!
//! A hoop is represented by a freely reduced word in oriented edges that
//! starts and ends at the basepoint. On a fixed graph with independent edge
//! variables, two closed words give the same holonomy for every connection
//! exactly when their free reductions coincide, so the reduced word is the
//! canonical representative of the class.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HoopError {
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("graph is not connected: vertex `{0}` is unreachable from the basepoint")]
    Disconnected(String),
    #[error("letter {position} does not continue the path")]
    NotAPath { position: usize },
    #[error("word does not return to its starting vertex")]
    NotClosed,
    #[error("word does not start at the basepoint")]
    NotBased,
    #[error("hoops are based at different points")]
    BasepointMismatch,
    #[error("malformed loop token `{0}`")]
    BadToken(String),
    #[error("graph has no vertices")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub edge: EdgeId,
    pub dir: Direction,
}

impl Letter {
    pub fn fwd(edge: usize) -> Letter {
        Letter { edge: EdgeId(edge), dir: Direction::Forward }
    }

    pub fn bwd(edge: usize) -> Letter {
        Letter { edge: EdgeId(edge), dir: Direction::Backward }
    }

    pub fn inverse(self) -> Letter {
        Letter { edge: self.edge, dir: self.dir.flip() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub name: String,
    pub source: VertexId,
    pub target: VertexId,
}

/// A connected oriented multigraph with a distinguished basepoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasedGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    basepoint: VertexId,
    edge_index: HashMap<String, EdgeId>,
}

impl BasedGraph {
    /// Builds a graph from named vertices and `(edge id, source, target)`
    /// triples.
    pub fn new<S: AsRef<str>>(
        vertices: &[S],
        edges: &[(S, S, S)],
        basepoint: &str,
    ) -> Result<Self, HoopError> {
        if vertices.is_empty() {
            return Err(HoopError::Empty);
        }
        let mut vindex = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vindex.insert(v.as_ref().to_string(), VertexId(i)).is_some() {
                return Err(HoopError::Duplicate { kind: "vertex", id: v.as_ref().into() });
            }
        }
        let lookup = |name: &str| {
            vindex.get(name).copied().ok_or_else(|| HoopError::UnknownVertex(name.to_string()))
        };
        let mut built = Vec::with_capacity(edges.len());
        for (name, s, t) in edges {
            built.push(Edge {
                name: name.as_ref().to_string(),
                source: lookup(s.as_ref())?,
                target: lookup(t.as_ref())?,
            });
        }
        let basepoint = lookup(basepoint)?;
        Self::assemble(vertices.iter().map(|v| v.as_ref().to_string()).collect(), built, basepoint)
    }

    /// Builds a graph on vertices `v0..` with edges `e1..` in the given order.
    pub fn from_indices(
        n_vertices: usize,
        edges: &[(usize, usize)],
        basepoint: usize,
    ) -> Result<Self, HoopError> {
        if n_vertices == 0 {
            return Err(HoopError::Empty);
        }
        let vertices: Vec<String> = (0..n_vertices).map(|i| format!("v{i}")).collect();
        let mut built = Vec::with_capacity(edges.len());
        for (i, &(s, t)) in edges.iter().enumerate() {
            for v in [s, t] {
                if v >= n_vertices {
                    return Err(HoopError::UnknownVertex(format!("v{v}")));
                }
            }
            built.push(Edge { name: format!("e{}", i + 1), source: VertexId(s), target: VertexId(t) });
        }
        if basepoint >= n_vertices {
            return Err(HoopError::UnknownVertex(format!("v{basepoint}")));
        }
        Self::assemble(vertices, built, VertexId(basepoint))
    }

    fn assemble(vertices: Vec<String>, edges: Vec<Edge>, basepoint: VertexId) -> Result<Self, HoopError> {
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.name.clone(), EdgeId(i)).is_some() {
                return Err(HoopError::Duplicate { kind: "edge", id: e.name.clone() });
            }
        }
        let graph = BasedGraph { vertices, edges, basepoint, edge_index };
        let reach = graph.spanning_tree();
        if let Some(v) = reach.iter().position(|r| r.is_none()) {
            return Err(HoopError::Disconnected(graph.vertices[v].clone()));
        }
        Ok(graph)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn basepoint(&self) -> VertexId {
        self.basepoint
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> Option<&Edge> {
        self.edges.get(e.0)
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertices[v.0]
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertices
    }

    pub fn edge_id(&self, name: &str) -> Option<EdgeId> {
        self.edge_index.get(name).copied()
    }

    pub fn vertex_id(&self, name: &str) -> Option<VertexId> {
        self.vertices.iter().position(|v| v == name).map(VertexId)
    }

    /// Start and end vertex of a letter.
    pub fn letter_ends(&self, l: Letter) -> Option<(VertexId, VertexId)> {
        let e = self.edges.get(l.edge.0)?;
        Some(match l.dir {
            Direction::Forward => (e.source, e.target),
            Direction::Backward => (e.target, e.source),
        })
    }

    /// For each vertex, the letter that reaches it from its BFS parent
    /// (`Some(None)` for the basepoint, `None` if unreachable).
    fn spanning_tree(&self) -> Vec<Option<Option<Letter>>> {
        let mut parent: Vec<Option<Option<Letter>>> = vec![None; self.vertices.len()];
        let adj = self.incidence();
        parent[self.basepoint.0] = Some(None);
        let mut queue = VecDeque::from([self.basepoint]);
        while let Some(v) = queue.pop_front() {
            for &l in &adj[v.0] {
                let (_, to) = self.letter_ends(l).expect("edge in range");
                if parent[to.0].is_none() {
                    parent[to.0] = Some(Some(l));
                    queue.push_back(to);
                }
            }
        }
        parent
    }

    /// Letters leaving each vertex, in either orientation.
    fn incidence(&self) -> Vec<Vec<Letter>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.source.0].push(Letter::fwd(i));
            adj[e.target.0].push(Letter::bwd(i));
        }
        adj
    }

    /// Marks the edges of the BFS spanning tree rooted at the basepoint.
    pub fn tree_edges(&self) -> Vec<bool> {
        let mut tree = vec![false; self.edges.len()];
        for l in self.spanning_tree().into_iter().flatten().flatten() {
            tree[l.edge.0] = true;
        }
        tree
    }

    /// Tree path from the basepoint to `v`.
    pub fn path_from_basepoint(&self, v: VertexId) -> Vec<Letter> {
        let tree = self.spanning_tree();
        let mut path = Vec::new();
        let mut cur = v;
        while let Some(Some(l)) = tree[cur.0] {
            path.push(l);
            cur = self.letter_ends(l).expect("edge in range").0;
        }
        path.reverse();
        path
    }

    /// Parses a word in the `e1 e2^-1 e3` grammar and reduces it.
    pub fn parse_word(&self, text: &str) -> Result<HoopWord, HoopError> {
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            let (name, dir) = match token.strip_suffix("^-1") {
                Some(base) => (base, Direction::Backward),
                None => (token, Direction::Forward),
            };
            if name.is_empty() || name.contains('^') {
                return Err(HoopError::BadToken(token.to_string()));
            }
            let edge = self.edge_id(name).ok_or_else(|| HoopError::UnknownEdge(name.to_string()))?;
            letters.push(Letter { edge, dir });
        }
        reduce_word(self, &letters)
    }

    /// Formats a word back into the token grammar.
    pub fn format_word(&self, word: &HoopWord) -> String {
        word.letters()
            .iter()
            .map(|l| {
                let name = &self.edges[l.edge.0].name;
                match l.dir {
                    Direction::Forward => name.clone(),
                    Direction::Backward => format!("{name}^-1"),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Random connected graph with between one and `max_edges` edges.
    /// Self-loops and parallel edges are allowed.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_edges: usize) -> BasedGraph {
        let max_edges = max_edges.max(1);
        let n_vertices = rng.random_range(1..=max_edges.min(4));
        let n_edges = rng.random_range(n_vertices.max(2).min(max_edges)..=max_edges).max(1);
        let mut edges = Vec::with_capacity(n_edges);
        for v in 1..n_vertices {
            let u = rng.random_range(0..v);
            edges.push(if rng.random_bool(0.5) { (u, v) } else { (v, u) });
        }
        while edges.len() < n_edges {
            edges.push((rng.random_range(0..n_vertices), rng.random_range(0..n_vertices)));
        }
        let basepoint = rng.random_range(0..n_vertices);
        BasedGraph::from_indices(n_vertices, &edges, basepoint).expect("spanning tree keeps it connected")
    }

    /// Random closed walk of roughly `steps` letters, returned to the
    /// basepoint along the spanning tree and freely reduced.
    pub fn random_loop<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> HoopWord {
        let adj = self.incidence();
        let mut letters = Vec::with_capacity(steps + self.vertices.len());
        let mut at = self.basepoint;
        for _ in 0..steps {
            let out = &adj[at.0];
            if out.is_empty() {
                break;
            }
            let l = out[rng.random_range(0..out.len())];
            letters.push(l);
            at = self.letter_ends(l).expect("edge in range").1;
        }
        letters.extend(self.path_from_basepoint(at).into_iter().rev().map(Letter::inverse));
        reduce_word(self, &letters).expect("walk is a closed based path")
    }

    /// Renames edges and vertices by the given permutations:
    /// old edge `i` becomes new edge `edge_perm[i]`.
    pub fn relabel(&self, vertex_perm: &[usize], edge_perm: &[usize]) -> Result<(BasedGraph, Relabeling), HoopError> {
        let check = |perm: &[usize], n: usize, kind: &'static str| {
            let set: HashSet<_> = perm.iter().copied().collect();
            if perm.len() != n || set.len() != n || perm.iter().any(|&p| p >= n) {
                Err(HoopError::Duplicate { kind, id: "permutation".into() })
            } else {
                Ok(())
            }
        };
        check(vertex_perm, self.vertices.len(), "vertex")?;
        check(edge_perm, self.edges.len(), "edge")?;
        let mut vertices = vec![String::new(); self.vertices.len()];
        for (old, name) in self.vertices.iter().enumerate() {
            vertices[vertex_perm[old]] = name.clone();
        }
        let mut edges = vec![None; self.edges.len()];
        for (old, e) in self.edges.iter().enumerate() {
            edges[edge_perm[old]] = Some(Edge {
                name: e.name.clone(),
                source: VertexId(vertex_perm[e.source.0]),
                target: VertexId(vertex_perm[e.target.0]),
            });
        }
        let graph = Self::assemble(
            vertices,
            edges.into_iter().map(|e| e.expect("permutation is total")).collect(),
            VertexId(vertex_perm[self.basepoint.0]),
        )?;
        let relabeling = Relabeling { edge_perm: edge_perm.to_vec(), basepoint: graph.basepoint };
        Ok((graph, relabeling))
    }

    /// Order-independent description: `(edge name, source name, target name)`
    /// sorted, plus the basepoint name. Equal signatures mean the graphs agree
    /// up to index relabeling.
    pub fn signature(&self) -> (Vec<(String, String, String)>, String) {
        let mut rows: Vec<_> = self
            .edges
            .iter()
            .map(|e| (e.name.clone(), self.vertices[e.source.0].clone(), self.vertices[e.target.0].clone()))
            .collect();
        rows.sort();
        (rows, self.vertices[self.basepoint.0].clone())
    }
}

/// Index renaming produced by [`BasedGraph::relabel`].
#[derive(Debug, Clone)]
pub struct Relabeling {
    edge_perm: Vec<usize>,
    basepoint: VertexId,
}

impl Relabeling {
    pub fn edge(&self, e: EdgeId) -> EdgeId {
        EdgeId(self.edge_perm[e.0])
    }

    pub fn rewrite(&self, word: &HoopWord) -> HoopWord {
        HoopWord {
            basepoint: self.basepoint,
            letters: word.letters.iter().map(|l| Letter { edge: self.edge(l.edge), dir: l.dir }).collect(),
        }
    }
}

/// A freely reduced closed edge-word at the basepoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HoopWord {
    basepoint: VertexId,
    letters: Vec<Letter>,
}

impl HoopWord {
    pub fn empty(basepoint: VertexId) -> HoopWord {
        HoopWord { basepoint, letters: Vec::new() }
    }

    pub fn basepoint(&self) -> VertexId {
        self.basepoint
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Signed number of traversals of each edge.
    pub fn multiplicities(&self, n_edges: usize) -> Vec<i64> {
        let mut n = vec![0i64; n_edges];
        for l in &self.letters {
            n[l.edge.0] += l.dir.sign();
        }
        n
    }

    /// Checks every letter against `graph` (edges exist, path chains).
    pub fn validate(&self, graph: &BasedGraph) -> Result<(), HoopError> {
        if self.basepoint != graph.basepoint() {
            return Err(HoopError::BasepointMismatch);
        }
        check_path(graph, &self.letters)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.letters.iter().map(|l| l.edge)
    }
}

fn check_path(graph: &BasedGraph, letters: &[Letter]) -> Result<(), HoopError> {
    let mut at = graph.basepoint();
    for (i, &l) in letters.iter().enumerate() {
        let (from, to) = graph
            .letter_ends(l)
            .ok_or_else(|| HoopError::UnknownEdge(format!("#{}", l.edge.0)))?;
        if from != at {
            return Err(if i == 0 { HoopError::NotBased } else { HoopError::NotAPath { position: i } });
        }
        at = to;
    }
    if at != graph.basepoint() {
        return Err(HoopError::NotClosed);
    }
    Ok(())
}

pub(crate) fn free_reduce(letters: impl IntoIterator<Item = Letter>) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::new();
    for l in letters {
        match out.last() {
            Some(&top) if top == l.inverse() => {
                out.pop();
            }
            _ => out.push(l),
        }
    }
    out
}

/// Validates a closed based path and freely reduces it.
pub fn reduce_word(graph: &BasedGraph, letters: &[Letter]) -> Result<HoopWord, HoopError> {
    check_path(graph, letters)?;
    Ok(HoopWord { basepoint: graph.basepoint(), letters: free_reduce(letters.iter().copied()) })
}

/// Group product: reduced concatenation.
pub fn compose(a: &HoopWord, b: &HoopWord) -> Result<HoopWord, HoopError> {
    if a.basepoint != b.basepoint {
        return Err(HoopError::BasepointMismatch);
    }
    Ok(HoopWord {
        basepoint: a.basepoint,
        letters: free_reduce(a.letters.iter().chain(&b.letters).copied()),
    })
}

pub fn invert(a: &HoopWord) -> HoopWord {
    HoopWord { basepoint: a.basepoint, letters: a.letters.iter().rev().map(|l| l.inverse()).collect() }
}

/// Records how an edge was split so words can be rewritten.
///
/// The split edge keeps its index for the first half; the second half is
/// appended as a new edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subdivision {
    pub split: EdgeId,
    pub first: EdgeId,
    pub second: EdgeId,
    pub midpoint: VertexId,
}

impl Subdivision {
    pub fn rewrite(&self, word: &HoopWord) -> HoopWord {
        let letters = word.letters.iter().flat_map(|&l| -> Vec<Letter> {
            if l.edge != self.split {
                return vec![l];
            }
            let (a, b) = (Letter { edge: self.first, dir: l.dir }, Letter { edge: self.second, dir: l.dir });
            match l.dir {
                Direction::Forward => vec![a, b],
                Direction::Backward => vec![b, a],
            }
        });
        HoopWord { basepoint: word.basepoint, letters: free_reduce(letters) }
    }
}

/// Splits edge `e` into two halves through a fresh vertex.
pub fn subdivide_edge(graph: &BasedGraph, e: EdgeId) -> Result<(BasedGraph, Subdivision), HoopError> {
    let old = graph.edge(e).ok_or_else(|| HoopError::UnknownEdge(format!("#{}", e.0)))?.clone();
    let fresh = |base: String, taken: &dyn Fn(&str) -> bool| {
        let mut name = base;
        while taken(&name) {
            name.push('\'');
        }
        name
    };
    let mid_name = fresh(format!("{}.mid", old.name), &|n| graph.vertices.iter().any(|v| v == n));
    let first_name = fresh(format!("{}.0", old.name), &|n| graph.edge_index.contains_key(n));
    let second_name = fresh(format!("{}.1", old.name), &|n| graph.edge_index.contains_key(n) || n == first_name);

    let midpoint = VertexId(graph.vertices.len());
    let mut vertices = graph.vertices.clone();
    vertices.push(mid_name);
    let mut edges = graph.edges.clone();
    edges[e.0] = Edge { name: first_name, source: old.source, target: midpoint };
    edges.push(Edge { name: second_name, source: midpoint, target: old.target });
    let second = EdgeId(edges.len() - 1);
    let refined = BasedGraph::assemble(vertices, edges, graph.basepoint)?;
    Ok((refined, Subdivision { split: e, first: e, second, midpoint }))
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dir {
            Direction::Forward => write!(f, "#{}", self.edge.0),
            Direction::Backward => write!(f, "#{}^-1", self.edge.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::RngStream;

    /// One vertex carrying three self-loops e1, e2, e3.
    fn rose() -> BasedGraph {
        BasedGraph::from_indices(1, &[(0, 0), (0, 0), (0, 0)], 0).unwrap()
    }

    #[test]
    fn reduce_examples() {
        let g = rose();
        let w = reduce_word(&g, &[Letter::fwd(0), Letter::fwd(1), Letter::bwd(1), Letter::bwd(0)]).unwrap();
        assert!(w.is_empty());
        let w = reduce_word(&g, &[Letter::fwd(0), Letter::fwd(1), Letter::bwd(1), Letter::fwd(2)]).unwrap();
        assert_eq!(w.letters(), &[Letter::fwd(0), Letter::fwd(2)]);
        let again = reduce_word(&g, w.letters()).unwrap();
        assert_eq!(again, w);
    }

    #[test]
    fn path_errors() {
        // v0 -e1-> v1 -e2-> v0, basepoint v0
        let g = BasedGraph::from_indices(2, &[(0, 1), (1, 0)], 0).unwrap();
        assert_eq!(reduce_word(&g, &[Letter::fwd(0)]), Err(HoopError::NotClosed));
        assert_eq!(reduce_word(&g, &[Letter::fwd(1)]), Err(HoopError::NotBased));
        assert_eq!(
            reduce_word(&g, &[Letter::fwd(0), Letter::fwd(0)]),
            Err(HoopError::NotAPath { position: 1 })
        );
        assert!(matches!(reduce_word(&g, &[Letter::fwd(7)]), Err(HoopError::UnknownEdge(_))));
        assert!(reduce_word(&g, &[Letter::fwd(0), Letter::fwd(1)]).is_ok());
    }

    #[test]
    fn compose_and_invert() {
        let g = rose();
        let a = g.parse_word("e1 e2^-1").unwrap();
        let b = g.parse_word("e2").unwrap();
        let empty = HoopWord::empty(g.basepoint());
        assert_eq!(compose(&a, &empty).unwrap(), a);
        assert!(compose(&a, &invert(&a)).unwrap().is_empty());
        assert_eq!(compose(&g.parse_word("e1").unwrap(), &b).unwrap(), g.parse_word("e1 e2").unwrap());
        assert_eq!(invert(&a), g.parse_word("e2 e1^-1").unwrap());
        assert_eq!(invert(&invert(&a)), a);
        assert!(invert(&empty).is_empty());
        let other = HoopWord::empty(VertexId(1));
        assert_eq!(compose(&a, &other), Err(HoopError::BasepointMismatch));
    }

    #[test]
    fn parse_and_format() {
        let g = rose();
        let w = g.parse_word("e1 e3^-1 e2").unwrap();
        assert_eq!(g.format_word(&w), "e1 e3^-1 e2");
        assert_eq!(g.parse_word("e9"), Err(HoopError::UnknownEdge("e9".into())));
        assert_eq!(g.parse_word("e1^2"), Err(HoopError::BadToken("e1^2".into())));
    }

    #[test]
    fn graph_validation() {
        assert!(matches!(
            BasedGraph::new(&["a", "b"], &[("e", "a", "a")], "a"),
            Err(HoopError::Disconnected(v)) if v == "b"
        ));
        assert!(matches!(
            BasedGraph::new(&["a"], &[("e", "a", "a"), ("e", "a", "a")], "a"),
            Err(HoopError::Duplicate { .. })
        ));
        assert!(matches!(BasedGraph::new(&["a"], &[("e", "a", "z")], "a"), Err(HoopError::UnknownVertex(_))));
        assert!(matches!(BasedGraph::new::<&str>(&["a"], &[], "q"), Err(HoopError::UnknownVertex(_))));
    }

    #[test]
    fn subdivision_of_single_loop() {
        let g = BasedGraph::from_indices(1, &[(0, 0)], 0).unwrap();
        let (h, sub) = subdivide_edge(&g, EdgeId(0)).unwrap();
        assert_eq!(h.n_edges(), 2);
        assert_eq!(h.n_vertices(), 2);
        let w = g.parse_word("e1").unwrap();
        let r = sub.rewrite(&w);
        assert_eq!(r.letters(), &[Letter::fwd(0), Letter::fwd(1)]);
        r.validate(&h).unwrap();
        sub.rewrite(&invert(&w)).validate(&h).unwrap();
        assert!(matches!(subdivide_edge(&g, EdgeId(3)), Err(HoopError::UnknownEdge(_))));
    }

    #[test]
    fn subdivisions_on_disjoint_edges_commute() {
        let g = BasedGraph::from_indices(2, &[(0, 1), (1, 0), (0, 0)], 0).unwrap();
        let (a, _) = subdivide_edge(&g, EdgeId(0)).unwrap();
        let (ab, _) = subdivide_edge(&a, EdgeId(1)).unwrap();
        let (b, _) = subdivide_edge(&g, EdgeId(1)).unwrap();
        let (ba, _) = subdivide_edge(&b, EdgeId(0)).unwrap();
        assert_eq!(ab.signature(), ba.signature());
    }

    #[test]
    fn random_words_rewrite_to_valid_hoops() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..200 {
            let g = BasedGraph::random(&mut rng, 8);
            let w = g.random_loop(&mut rng, 10);
            w.validate(&g).unwrap();
            let e = EdgeId(rand::Rng::random_range(&mut rng, 0..g.n_edges()));
            let (h, sub) = subdivide_edge(&g, e).unwrap();
            sub.rewrite(&w).validate(&h).unwrap();
        }
    }

    #[test]
    fn hoop_group_axioms_on_random_triples() {
        let mut rng = RngStream::new(23, 0);
        for _ in 0..1000 {
            let g = BasedGraph::random(&mut rng, 8);
            let (a, b, c) = (g.random_loop(&mut rng, 6), g.random_loop(&mut rng, 6), g.random_loop(&mut rng, 6));
            let ab_c = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            let a_bc = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            assert_eq!(ab_c, a_bc);
            assert!(compose(&invert(&a), &a).unwrap().is_empty());
            assert_eq!(compose(&HoopWord::empty(g.basepoint()), &a).unwrap(), a);
            assert_eq!(invert(&compose(&a, &b).unwrap()), compose(&invert(&b), &invert(&a)).unwrap());
        }
    }

    #[test]
    fn relabel_round_trips_words() {
        let g = BasedGraph::from_indices(2, &[(0, 1), (1, 0), (0, 0)], 0).unwrap();
        let (h, map) = g.relabel(&[1, 0], &[2, 0, 1]).unwrap();
        assert_eq!(h.signature(), g.signature());
        let w = g.parse_word("e1 e2 e3^-1").unwrap();
        let r = map.rewrite(&w);
        r.validate(&h).unwrap();
        assert_eq!(h.format_word(&r), "e1 e2 e3^-1");
    }
}
