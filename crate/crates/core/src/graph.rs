//! Undirected communication topology, the consensus mixing matrix, and the
//! incidence/Laplacian constructions used by the privacy certifier.
//!
//! Nodes are labeled `0..n`. Every node is implicitly its own neighbor, so
//! [`Graph::neighbors`] always contains the queried node; self-loops are never
//! stored as edges.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop ({0}, {0}) is not allowed")]
    SelfLoop(usize),
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("cannot delete every node of the graph")]
    NothingLeft,
    #[error("mixing weight {delta} must lie in (0, {limit})")]
    DeltaOutOfRange { delta: f64, limit: f64 },
    #[error("mixing weight {delta} makes the diagonal of node {node} negative ({diag})")]
    NegativeDiagonal { node: usize, delta: f64, diag: f64 },
    #[error("graph has no edges")]
    NoEdges,
    #[error("node {0} is isolated, the degree matrix is singular")]
    IsolatedNode(usize),
    #[error("malformed edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot build a connected non-bipartite graph with {n} nodes")]
    GeneratorInfeasible { n: usize },
}

/// Simple undirected graph with edges stored as `(low, high)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        Graph::new(raw.n, raw.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph, deduplicating undirected edges.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &set {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: set,
            adjacency,
        })
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        Graph::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Graph::new(n, edges)
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        Graph::new(n, (1..n).map(|i| (0, i)))
    }

    /// The five-player breach topology. Node 4 is the compromised player; it
    /// hears nodes 0, 2 and 3, and node 3's whole neighborhood is {2, 3, 4}.
    pub fn canonical_five() -> Self {
        Graph::new(5, [(0, 1), (1, 2), (2, 3), (0, 4), (2, 4), (3, 4)]).expect("static edge list is valid")
    }

    /// Seeded random graph that is connected and contains a triangle: a random
    /// spanning tree, `extra_edges` additional random edges, and a forced
    /// triangle on three tree-adjacent nodes.
    pub fn random_connected_nonbipartite(n: usize, extra_edges: usize, seed: u64) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::GeneratorInfeasible { n });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        for t in 1..n {
            let parent = order[rng.random_range(0..t)];
            let child = order[t];
            edges.insert((parent.min(child), parent.max(child)));
        }
        // Close a triangle around any inner node of the tree.
        let (a, c) = {
            let mut adj = vec![Vec::new(); n];
            for &(i, j) in &edges {
                adj[i].push(j);
                adj[j].push(i);
            }
            let hub = (0..n)
                .find(|&v| adj[v].len() >= 2)
                .expect("a tree on >= 3 nodes has an inner node");
            (adj[hub][0], adj[hub][1])
        };
        edges.insert((a.min(c), a.max(c)));
        let max_edges = n * (n - 1) / 2;
        let target = (edges.len() + extra_edges).min(max_edges);
        while edges.len() < target {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        Graph::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(low, high)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node >= self.n {
            Err(GraphError::NodeOutOfRange { node, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Adjacent nodes, excluding `i` itself, in ascending order.
    pub fn adjacent(&self, i: usize) -> Result<&[usize], GraphError> {
        self.check_node(i)?;
        Ok(&self.adjacency[i])
    }

    /// The closed neighborhood N_i = adjacency ∪ {i}, ascending.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>, GraphError> {
        self.check_node(i)?;
        let mut out = self.adjacency[i].clone();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        Ok(out)
    }

    pub fn degree(&self, i: usize) -> Result<usize, GraphError> {
        Ok(self.adjacent(i)?.len())
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// True iff the graph is 2-colorable. A graph without edges is bipartite.
    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].expect("queued nodes are colored");
                for &w in &self.adjacency[u] {
                    match color[w] {
                        None => {
                            color[w] = Some(!cu);
                            queue.push_back(w);
                        }
                        Some(cw) if cw == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Induced subgraph on the nodes outside `removed`, relabeled contiguously.
    pub fn restrict(&self, removed: &BTreeSet<usize>) -> Result<Restriction, GraphError> {
        for &a in removed {
            self.check_node(a)?;
        }
        if removed.len() == self.n {
            return Err(GraphError::NothingLeft);
        }
        let to_original: Vec<usize> = (0..self.n).filter(|v| !removed.contains(v)).collect();
        let mut to_local = vec![None; self.n];
        for (local, &orig) in to_original.iter().enumerate() {
            to_local[orig] = Some(local);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(i, j)| Some((to_local[i]?, to_local[j]?)));
        let graph = Graph::new(to_original.len(), edges)?;
        Ok(Restriction {
            graph,
            to_original,
            to_local,
        })
    }

    /// Plain-text edge list, one `i j` pair per line, preceded by `# n <count>`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n {}\n", self.n);
        for (i, j) in self.edges() {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

impl FromStr for Graph {
    type Err = GraphError;

    /// Parses the edge-list format. The node count comes from a `# n <count>`
    /// header when present, otherwise from the largest label seen.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("n") {
                    let count = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| GraphError::Parse {
                            line: idx + 1,
                            reason: "expected `# n <count>`".into(),
                        })?;
                    n = Some(count);
                }
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| GraphError::Parse {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if nums.len() != 2 {
                return Err(GraphError::Parse {
                    line: idx + 1,
                    reason: format!("expected two node labels, found {}", nums.len()),
                });
            }
            edges.push((nums[0], nums[1]));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
        Graph::new(n, edges)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, edges=[", self.n)?;
        for (k, (i, j)) in self.edges().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i}-{j}")?;
        }
        write!(f, "])")
    }
}

/// Result of deleting nodes: the residual graph and both index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub graph: Graph,
    /// `to_original[local]` is the label of the residual node in the full graph.
    pub to_original: Vec<usize>,
    /// `to_local[original]` is `None` for deleted nodes.
    pub to_local: Vec<Option<usize>>,
}

/// Symmetric doubly stochastic weights with every off-diagonal nonzero equal
/// to `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    w: DenseMatrix,
    delta: f64,
}

impl MixingMatrix {
    pub fn new(g: &Graph, delta: f64) -> Result<Self, GraphError> {
        let n = g.node_count();
        let limit = if n > 1 { 1.0 / (n - 1) as f64 } else { f64::INFINITY };
        if !(delta > 0.0 && delta < limit) {
            return Err(GraphError::DeltaOutOfRange { delta, limit });
        }
        let mut w = DenseMatrix::zeros(n, n);
        for (i, j) in g.edges() {
            w[(i, j)] = delta;
            w[(j, i)] = delta;
        }
        for i in 0..n {
            let diag = 1.0 - g.degree(i)? as f64 * delta;
            if diag < 0.0 {
                return Err(GraphError::NegativeDiagonal { node: i, delta, diag });
            }
            w[(i, i)] = diag;
        }
        Ok(MixingMatrix { w, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn stochasticity_error(&self) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.w[(i, j)]).sum();
            let col: f64 = (0..n).map(|j| self.w[(j, i)]).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }

    /// True when the sparsity pattern matches `g` exactly.
    pub fn matches(&self, g: &Graph) -> bool {
        let n = g.node_count();
        if self.size() != n {
            return false;
        }
        (0..n).all(|i| (0..n).all(|j| i == j || (self.w[(i, j)] != 0.0) == g.has_edge(i, j)))
    }
}

/// Oriented incidence matrix (head = larger label, tail = smaller), its
/// positive/negative parts, adjacency, degree, and normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSet {
    /// Edge order used for the columns of `b`.
    pub edges: Vec<(usize, usize)>,
    pub b: DenseMatrix,
    pub b_plus: DenseMatrix,
    pub b_minus: DenseMatrix,
    pub adjacency: DenseMatrix,
    pub degree: DenseMatrix,
    pub laplacian: DenseMatrix,
}

impl IncidenceSet {
    pub fn new(g: &Graph) -> Result<Self, GraphError> {
        if g.edge_count() == 0 {
            return Err(GraphError::NoEdges);
        }
        let n = g.node_count();
        if let Some(isolated) = (0..n).find(|&i| g.adjacency[i].is_empty()) {
            return Err(GraphError::IsolatedNode(isolated));
        }
        let edges: Vec<_> = g.edges().collect();
        let m = edges.len();
        let mut b = DenseMatrix::zeros(n, m);
        let mut b_plus = DenseMatrix::zeros(n, m);
        let mut b_minus = DenseMatrix::zeros(n, m);
        for (e, &(tail, head)) in edges.iter().enumerate() {
            b[(head, e)] = 1.0;
            b[(tail, e)] = -1.0;
            b_plus[(head, e)] = 1.0;
            b_minus[(tail, e)] = 1.0;
        }
        let mut adjacency = DenseMatrix::zeros(n, n);
        for &(i, j) in &edges {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        let mut degree = DenseMatrix::zeros(n, n);
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let d = g.adjacency[i].len() as f64;
                degree[(i, i)] = d;
                1.0 / d.sqrt()
            })
            .collect();
        let mut laplacian = DenseMatrix::identity(n);
        for &(i, j) in &edges {
            let v = inv_sqrt[i] * inv_sqrt[j];
            laplacian[(i, j)] -= v;
            laplacian[(j, i)] -= v;
        }
        Ok(IncidenceSet {
            edges,
            b,
            b_plus,
            b_minus,
            adjacency,
            degree,
            laplacian,
        })
    }
}

/// Spectral bipartiteness test: every component with an edge has top
/// normalized-Laplacian eigenvalue 2.
pub fn is_bipartite_spectral(g: &Graph, tol: f64) -> bool {
    g.components().iter().all(|comp| {
        if comp.len() < 2 {
            return true;
        }
        let others: BTreeSet<usize> = (0..g.node_count()).filter(|v| !comp.contains(v)).collect();
        let sub = g.restrict(&others).expect("component is nonempty").graph;
        let inc = IncidenceSet::new(&sub).expect("connected component with >= 2 nodes has no isolated node");
        let eig = crate::numerics::sym_eigenvalues(&inc.laplacian).expect("laplacian is symmetric");
        let top = *eig.last().expect("nonempty spectrum");
        (top - 2.0).abs() <= tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn build_rejects_bad_input() {
        assert_eq!(Graph::new(2, [(0, 0)]), Err(GraphError::SelfLoop(0)));
        assert_eq!(
            Graph::new(2, [(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, n: 2 })
        );
        assert_eq!(Graph::new(0, []), Err(GraphError::Empty));
    }

    #[test]
    fn build_deduplicates() {
        let g = Graph::new(3, [(0, 1), (1, 0), (1, 2), (0, 2), (2, 0)]).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g, Graph::complete(3).unwrap());
    }

    #[test]
    fn neighbors_include_self() {
        let k3 = Graph::complete(3).unwrap();
        assert_eq!(k3.neighbors(0).unwrap(), vec![0, 1, 2]);
        let p3 = Graph::path(3).unwrap();
        assert_eq!(p3.neighbors(0).unwrap(), vec![0, 1]);
        let single = Graph::new(1, []).unwrap();
        assert_eq!(single.neighbors(0).unwrap(), vec![0]);
        assert!(k3.neighbors(3).is_err());
    }

    #[test]
    fn connectivity_and_bipartiteness() {
        assert!(Graph::complete(3).unwrap().is_connected());
        assert!(!Graph::new(4, [(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(Graph::new(1, []).unwrap().is_connected());

        assert!(Graph::cycle(4).unwrap().is_bipartite());
        assert!(!Graph::complete(3).unwrap().is_bipartite());
        assert!(Graph::new(1, []).unwrap().is_bipartite());
    }

    #[test]
    fn restriction_examples() {
        let r = Graph::canonical_five().restrict(&set(&[4])).unwrap();
        assert_eq!(r.graph, Graph::path(4).unwrap());
        assert_eq!(r.to_original, vec![0, 1, 2, 3]);

        let r = Graph::complete(5).unwrap().restrict(&set(&[4])).unwrap();
        assert_eq!(r.graph, Graph::complete(4).unwrap());

        let k3 = Graph::complete(3).unwrap();
        assert_eq!(k3.restrict(&set(&[])).unwrap().graph, k3);

        assert_eq!(k3.restrict(&set(&[0, 1, 2])), Err(GraphError::NothingLeft));
    }

    #[test]
    fn restriction_relabels_and_maps_back() {
        let g = Graph::cycle(6).unwrap();
        let r = g.restrict(&set(&[0, 3])).unwrap();
        assert_eq!(r.to_original, vec![1, 2, 4, 5]);
        assert_eq!(r.to_local[3], None);
        assert_eq!(r.to_local[4], Some(2));
        assert_eq!(r.graph, Graph::new(4, [(0, 1), (2, 3)]).unwrap());
    }

    #[test]
    fn mixing_matrix_k3() {
        let w = MixingMatrix::new(&Graph::complete(3).unwrap(), 0.2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.6 } else { 0.2 };
                assert!((w.get(i, j) - want).abs() < 1e-15);
            }
        }
        assert!(w.stochasticity_error() < 1e-12);
    }

    #[test]
    fn mixing_matrix_rejects_large_delta() {
        let k3 = Graph::complete(3).unwrap();
        assert!(matches!(
            MixingMatrix::new(&k3, 0.6),
            Err(GraphError::DeltaOutOfRange { .. })
        ));
        assert!(MixingMatrix::new(&k3, 0.5).is_err());
        assert!(MixingMatrix::new(&k3, 0.0).is_err());
    }

    #[test]
    fn mixing_matrix_for_ten_node_experiment() {
        let g = Graph::random_connected_nonbipartite(10, 5, 7).unwrap();
        let w = MixingMatrix::new(&g, 0.1).unwrap();
        assert!(w.stochasticity_error() < 1e-12);
        assert!(w.matches(&g));
    }

    #[test]
    fn incidence_single_edge() {
        let g = Graph::path(2).unwrap();
        let inc = IncidenceSet::new(&g).unwrap();
        // head = 1 (larger label), tail = 0
        assert_eq!(inc.b.column(0), vec![-1.0, 1.0]);
        assert_eq!(inc.degree, DenseMatrix::identity(2));
        let want = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!(inc.laplacian.max_abs_diff(&want) < 1e-15);
        assert_eq!(inc.b.sub(&inc.b_plus.sub(&inc.b_minus)).max_abs(), 0.0);
    }

    #[test]
    fn incidence_errors() {
        assert_eq!(IncidenceSet::new(&Graph::new(1, []).unwrap()), Err(GraphError::NoEdges));
        assert_eq!(
            IncidenceSet::new(&Graph::new(3, [(0, 1)]).unwrap()),
            Err(GraphError::IsolatedNode(2))
        );
    }

    #[test]
    fn incidence_columns_have_one_head_one_tail() {
        let g = Graph::random_connected_nonbipartite(8, 6, 3).unwrap();
        let inc = IncidenceSet::new(&g).unwrap();
        for e in 0..g.edge_count() {
            let col = inc.b.column(e);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), g.node_count() - 2);
        }
    }

    #[test]
    fn laplacian_spectra() {
        let k3 = IncidenceSet::new(&Graph::complete(3).unwrap()).unwrap();
        let eig = crate::numerics::sym_eigenvalues(&k3.laplacian).unwrap();
        for (got, want) in eig.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{eig:?}");
        }
        let c4 = IncidenceSet::new(&Graph::cycle(4).unwrap()).unwrap();
        let eig = crate::numerics::sym_eigenvalues(&c4.laplacian).unwrap();
        assert!((eig[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn random_generator_is_connected_nonbipartite_and_seeded() {
        for seed in 0..40 {
            let g = Graph::random_connected_nonbipartite(10, 5, seed).unwrap();
            assert!(g.is_connected());
            assert!(!g.is_bipartite());
            assert_eq!(g, Graph::random_connected_nonbipartite(10, 5, seed).unwrap());
        }
        assert!(Graph::random_connected_nonbipartite(2, 0, 0).is_err());
    }

    #[test]
    fn edge_list_and_json_forms() {
        let g = Graph::canonical_five();
        let text = g.to_edge_list();
        assert_eq!(text.parse::<Graph>().unwrap(), g);
        let bare: Graph = "0 1\n1 2\n\n".parse().unwrap();
        assert_eq!(bare, Graph::path(3).unwrap());
        assert!("0 1 2\n".parse::<Graph>().is_err());
        assert!("0 x\n".parse::<Graph>().is_err());

        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"n":5,"edges":[[0,1],[0,4],[1,2],[2,3],[2,4],[3,4]]}"#);
        let back: Graph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":2,"edges":[[1,1]]}"#).is_err());
    }
}
