//! Causal DAG with per-node dimensions.
//!
//! Node indices are 0-based in the API and 1-based in every file format and
//! in the CLI. Parent sets are stored sorted and deduplicated, which fixes the
//! column order used whenever parent values are concatenated.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node_dims has length {dims} but there are {nodes} nodes")]
    DimsLength { nodes: usize, dims: usize },
    #[error("parent_sets has length {parents} but there are {nodes} nodes")]
    ParentsLength { nodes: usize, parents: usize },
    #[error("node {node} has dimension 0")]
    ZeroDim { node: usize },
    #[error("node {node} lists invalid parent index {parent}")]
    InvalidParent { node: usize, parent: usize },
    #[error("node {node} is its own parent")]
    SelfLoop { node: usize },
    #[error("graph contains a cycle through nodes {nodes:?} (1-based)")]
    Cycle { nodes: Vec<usize> },
    #[error("invalid node index {index} (graph has {num_nodes} nodes)")]
    InvalidNode { index: usize, num_nodes: usize },
    #[error("random_dag requires at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("edge probability must lie in (0, 1], got {0}")]
    EdgeProbability(f64),
    #[error("no connected DAG found after {0} attempts")]
    RetryCap(usize),
    #[error("unknown graph kind '{0}'")]
    UnknownKind(String),
}

/// The named graph families used by the synthetic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Chain,
    Triangle,
    Diamond,
    Y,
    Ladder,
    Random,
}

impl GraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Chain => "chain",
            GraphKind::Triangle => "triangle",
            GraphKind::Diamond => "diamond",
            GraphKind::Y => "y",
            GraphKind::Ladder => "ladder",
            GraphKind::Random => "random",
        }
    }

    /// The four small graphs that have hand-written structural equations.
    pub fn is_small(self) -> bool {
        matches!(
            self,
            GraphKind::Chain | GraphKind::Triangle | GraphKind::Diamond | GraphKind::Y
        )
    }
}

impl std::str::FromStr for GraphKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chain" => Ok(GraphKind::Chain),
            "triangle" => Ok(GraphKind::Triangle),
            "diamond" => Ok(GraphKind::Diamond),
            "y" => Ok(GraphKind::Y),
            "ladder" => Ok(GraphKind::Ladder),
            "random" => Ok(GraphKind::Random),
            other => Err(GraphError::UnknownKind(other.to_string())),
        }
    }
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated DAG. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    dims: Vec<usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    offsets: Vec<usize>,
}

impl CausalGraph {
    pub fn new(
        names: Vec<String>,
        dims: Vec<usize>,
        parent_sets: Vec<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        let k = names.len();
        if k == 0 {
            return Err(GraphError::Empty);
        }
        if dims.len() != k {
            return Err(GraphError::DimsLength { nodes: k, dims: dims.len() });
        }
        if parent_sets.len() != k {
            return Err(GraphError::ParentsLength { nodes: k, parents: parent_sets.len() });
        }
        if let Some(node) = dims.iter().position(|&d| d == 0) {
            return Err(GraphError::ZeroDim { node: node + 1 });
        }
        let mut parents = Vec::with_capacity(k);
        for (node, set) in parent_sets.into_iter().enumerate() {
            let mut sorted: Vec<usize> = set.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
            for &p in &sorted {
                if p >= k {
                    return Err(GraphError::InvalidParent { node: node + 1, parent: p + 1 });
                }
                if p == node {
                    return Err(GraphError::SelfLoop { node: node + 1 });
                }
            }
            sorted.shrink_to_fit();
            parents.push(sorted);
        }
        let order = topological_order(&parents)?;
        let mut children = vec![Vec::new(); k];
        for (node, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(node);
            }
        }
        let mut offsets = Vec::with_capacity(k + 1);
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        offsets.push(acc);
        Ok(Self { names, dims, parents, children, order, offsets })
    }

    /// Builds a graph from 0-based edges with default names `x1..xK`.
    pub fn from_edges(dims: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let k = dims.len();
        let mut parents = vec![Vec::new(); k];
        for &(u, v) in edges {
            if u >= k {
                return Err(GraphError::InvalidNode { index: u + 1, num_nodes: k });
            }
            if v >= k {
                return Err(GraphError::InvalidNode { index: v + 1, num_nodes: k });
            }
            parents[v].push(u);
        }
        let names = (1..=k).map(|i| format!("x{i}")).collect();
        Self::new(names, dims, parents)
    }

    pub fn chain(dim: usize) -> Self {
        Self::from_edges(vec![dim; 3], &[(0, 1), (1, 2)]).expect("chain is a DAG")
    }

    pub fn triangle(dim: usize) -> Self {
        Self::from_edges(vec![dim; 3], &[(0, 1), (0, 2), (1, 2)]).expect("triangle is a DAG")
    }

    pub fn diamond(dim: usize) -> Self {
        Self::from_edges(vec![dim; 4], &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])
            .expect("diamond is a DAG")
    }

    pub fn y(dim: usize) -> Self {
        Self::from_edges(vec![dim; 4], &[(0, 2), (1, 2), (2, 3)]).expect("y is a DAG")
    }

    /// Ten-node ladder: two rails joined by rungs.
    pub fn ladder(dim: usize) -> Self {
        let edges = [
            (0, 1),
            (0, 2),
            (1, 3),
            (2, 3),
            (2, 4),
            (3, 5),
            (4, 5),
            (4, 6),
            (5, 7),
            (6, 7),
            (6, 8),
            (7, 9),
            (8, 9),
        ];
        Self::from_edges(vec![dim; 10], &edges).expect("ladder is a DAG")
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, node: usize) -> usize {
        self.dims[node]
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_root(&self, node: usize) -> bool {
        self.parents[node].is_empty()
    }

    pub fn is_sink(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.is_root(i)).collect()
    }

    pub fn non_roots(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| !self.is_root(i)).collect()
    }

    /// Edges as 0-based `(parent, child)` pairs sorted by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (v, ps) in self.parents.iter().enumerate() {
            for &u in ps {
                edges.push((u, v));
            }
        }
        edges
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Topological order with ties broken by ascending index.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Total width of a row holding every node's value.
    pub fn total_dim(&self) -> usize {
        self.offsets[self.num_nodes()]
    }

    /// Column range of `node` inside a full row.
    pub fn columns(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    /// Sum of the parents' dimensions.
    pub fn parent_dim(&self, node: usize) -> usize {
        self.parents[node].iter().map(|&p| self.dims[p]).sum()
    }

    /// Column indices of the given node set, in ascending node order.
    pub fn columns_of<'a>(&self, nodes: impl IntoIterator<Item = &'a usize>) -> Vec<usize> {
        let set: BTreeSet<usize> = nodes.into_iter().copied().collect();
        set.into_iter().flat_map(|n| self.columns(n)).collect()
    }

    /// Column headers of the form `x3.1`, `x3.2`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.total_dim());
        for (name, &d) in self.names.iter().zip(&self.dims) {
            for j in 1..=d {
                out.push(format!("{name}.{j}"));
            }
        }
        out
    }

    pub fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node < self.num_nodes() {
            Ok(())
        } else {
            Err(GraphError::InvalidNode { index: node + 1, num_nodes: self.num_nodes() })
        }
    }

    /// Transitive closure of children, excluding `node` itself.
    pub fn descendants(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_node(node)?;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.children[node].clone();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.children[v].iter().copied());
            }
        }
        Ok(seen)
    }

    /// Union of the descendants of every node in `nodes`.
    pub fn descendants_of_set(&self, nodes: &BTreeSet<usize>) -> Result<BTreeSet<usize>, GraphError> {
        let mut out = BTreeSet::new();
        for &n in nodes {
            out.extend(self.descendants(n)?);
        }
        Ok(out)
    }

    /// Whether the undirected skeleton forms a single connected component.
    pub fn is_connected(&self) -> bool {
        let k = self.num_nodes();
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in self.parents[v].iter().chain(&self.children[v]) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == k
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            nodes: self
                .names
                .iter()
                .zip(&self.dims)
                .map(|(name, &dim)| NodeEntry { name: name.clone(), dim })
                .collect(),
            edges: self.edges().into_iter().map(|(u, v)| [u + 1, v + 1]).collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GraphError> {
        let k = file.nodes.len();
        let mut parents = vec![Vec::new(); k];
        for &[u, v] in &file.edges {
            if u == 0 || u > k {
                return Err(GraphError::InvalidNode { index: u, num_nodes: k });
            }
            if v == 0 || v > k {
                return Err(GraphError::InvalidNode { index: v, num_nodes: k });
            }
            parents[v - 1].push(u - 1);
        }
        Self::new(
            file.nodes.iter().map(|n| n.name.clone()).collect(),
            file.nodes.iter().map(|n| n.dim).collect(),
            parents,
        )
    }
}

impl Serialize for CausalGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CausalGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = GraphFile::deserialize(deserializer)?;
        CausalGraph::from_file(&file).map_err(serde::de::Error::custom)
    }
}

/// On-disk graph layout; edge endpoints are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub name: String,
    pub dim: usize,
}

/// Kahn's algorithm with a min-heap so ties resolve to the smallest index.
pub fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, GraphError> {
    let k = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); k];
    for (v, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(v);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..k).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() == k {
        Ok(order)
    } else {
        let remaining: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
        Err(GraphError::Cycle { nodes: find_cycle(parents, &remaining) })
    }
}

/// Walks parent links among unresolved nodes until a node repeats.
fn find_cycle(parents: &[Vec<usize>], remaining: &[bool]) -> Vec<usize> {
    let start = remaining.iter().position(|&r| r).expect("a cycle leaves nodes unresolved");
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; parents.len()];
    pos[start] = 0;
    let mut v = start;
    loop {
        // every unresolved node has at least one unresolved parent
        let next = *parents[v].iter().find(|&&p| remaining[p]).expect("unresolved parent");
        if pos[next] != usize::MAX {
            let mut cycle: Vec<usize> = path[pos[next]..].iter().map(|&n| n + 1).collect();
            cycle.sort_unstable();
            return cycle;
        }
        pos[next] = path.len();
        path.push(next);
        v = next;
    }
}

/// One draw of the upper-triangular adjacency: each `u < v` pair is an edge
/// independently with probability `edge_prob`.
pub fn upper_triangular_edges<R: Rng + ?Sized>(
    num_nodes: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..num_nodes {
        for v in (u + 1)..num_nodes {
            if rng.random::<f64>() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Random upper-triangular DAG, resampled until its skeleton is connected.
pub fn random_dag<R: Rng + ?Sized>(
    num_nodes: usize,
    edge_prob: f64,
    node_dim: usize,
    rng: &mut R,
) -> Result<CausalGraph, GraphError> {
    const RETRY_CAP: usize = 10_000;
    if num_nodes < 2 {
        return Err(GraphError::TooFewNodes(num_nodes));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(GraphError::EdgeProbability(edge_prob));
    }
    for _ in 0..RETRY_CAP {
        let edges = upper_triangular_edges(num_nodes, edge_prob, rng);
        let graph = CausalGraph::from_edges(vec![node_dim; num_nodes], &edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(GraphError::RetryCap(RETRY_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_based(order: &[usize]) -> Vec<usize> {
        order.iter().map(|i| i + 1).collect()
    }

    #[test]
    fn chain_order() {
        assert_eq!(one_based(CausalGraph::chain(1).topological_order()), vec![1, 2, 3]);
    }

    #[test]
    fn edgeless_order_uses_index_tie_break() {
        let g = CausalGraph::from_edges(vec![1; 3], &[]).unwrap();
        assert_eq!(one_based(g.topological_order()), vec![1, 2, 3]);
    }

    fn brute_force_smallest_order(g: &CausalGraph) -> Vec<usize> {
        fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut tail in permutations(rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
        let mut valid: Vec<Vec<usize>> = permutations((0..g.num_nodes()).collect())
            .into_iter()
            .filter(|perm| {
                g.edges().iter().all(|&(u, v)| {
                    perm.iter().position(|&x| x == u) < perm.iter().position(|&x| x == v)
                })
            })
            .collect();
        valid.sort();
        valid.remove(0)
    }

    #[test]
    fn diamond_order_matches_enumeration() {
        let g = CausalGraph::diamond(1);
        let expected = brute_force_smallest_order(&g);
        assert_eq!(expected, vec![0, 1, 2, 3]);
        assert_eq!(g.topological_order(), expected.as_slice());
    }

    #[test]
    fn reversed_index_graph_sorts_by_edges() {
        let g = CausalGraph::from_edges(vec![1; 4], &[(3, 0), (2, 1), (3, 2)]).unwrap();
        assert_eq!(g.topological_order(), brute_force_smallest_order(&g).as_slice());
    }

    #[test]
    fn cycle_is_reported() {
        let err = CausalGraph::from_edges(vec![1; 4], &[(0, 1), (1, 2), (2, 1), (2, 3)]).unwrap_err();
        assert_eq!(err, GraphError::Cycle { nodes: vec![2, 3] });
    }

    #[test]
    fn self_loop_and_bad_parent_rejected() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            CausalGraph::new(names.clone(), vec![1, 1], vec![vec![], vec![1]]),
            Err(GraphError::SelfLoop { node: 2 })
        ));
        assert!(matches!(
            CausalGraph::new(names.clone(), vec![1, 1], vec![vec![], vec![5]]),
            Err(GraphError::InvalidParent { .. })
        ));
        assert!(matches!(
            CausalGraph::new(names, vec![1], vec![vec![], vec![]]),
            Err(GraphError::DimsLength { .. })
        ));
    }

    #[test]
    fn descendants_examples() {
        let chain = CausalGraph::chain(1);
        assert_eq!(chain.descendants(0).unwrap(), BTreeSet::from([1, 2]));
        assert!(chain.descendants(2).unwrap().is_empty());
        assert!(chain.descendants(3).is_err());
    }

    #[test]
    fn ladder_descendants_of_third_node() {
        let g = CausalGraph::ladder(3);
        // breadth-first search written out over the edge list
        let edges = g.edges();
        let mut frontier = vec![2usize];
        let mut seen = BTreeSet::new();
        while let Some(v) = frontier.pop() {
            for &(a, b) in &edges {
                if a == v && seen.insert(b) {
                    frontier.push(b);
                }
            }
        }
        let one: BTreeSet<usize> = seen.iter().map(|i| i + 1).collect();
        assert_eq!(one, (4..=10).collect());
        assert_eq!(g.descendants(2).unwrap(), seen);
        assert_eq!(g.total_dim(), 30);
    }

    #[test]
    fn random_dag_forced_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_dag(2, 1.0, 1, &mut rng).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        let g = random_dag(3, 1.0, 1, &mut rng).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(random_dag(1, 0.5, 1, &mut rng).is_err());
        assert!(random_dag(3, 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn random_dag_benchmark_setting_is_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_dag(10, 0.3, 3, &mut rng).unwrap();
            assert!(g.is_connected());
            assert_eq!(g.topological_order().len(), 10);
        }
    }

    #[test]
    fn adjacency_draw_edge_density() {
        // The connectivity filter biases the accepted graphs toward more
        // edges, so the Bernoulli rate is checked on the raw adjacency draw.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 10;
        let trials = 2000;
        let counts: Vec<f64> = (0..trials)
            .map(|_| upper_triangular_edges(k, 0.3, &mut rng).len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / trials as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        let expected = 0.3 * (k * (k - 1) / 2) as f64;
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn graph_file_round_trip() {
        let g = CausalGraph::ladder(3);
        let json = serde_json::to_string(&g).unwrap();
        let back: CausalGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        assert!(json.contains("\"edges\":[[1,2]"));
    }

    #[test]
    fn column_layout() {
        let g = CausalGraph::from_edges(vec![2, 1, 3], &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(g.columns(2), 3..6);
        assert_eq!(g.parent_dim(2), 3);
        assert_eq!(g.column_names()[0], "x1.1");
        assert_eq!(g.column_names()[5], "x3.3");
        assert_eq!(g.columns_of(&[2, 0]), vec![0, 1, 3, 4, 5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = CausalGraph> {
            (2usize..9).prop_flat_map(|k| {
                proptest::collection::vec(any::<bool>(), k * (k - 1) / 2).prop_map(move |bits| {
                    let mut edges = Vec::new();
                    let mut idx = 0;
                    for u in 0..k {
                        for v in (u + 1)..k {
                            if bits[idx] {
                                // reverse the labelling so order is non-trivial
                                edges.push((k - 1 - u, k - 1 - v));
                            }
                            idx += 1;
                        }
                    }
                    CausalGraph::from_edges(vec![1; k], &edges).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn order_is_valid_permutation(g in arb_graph()) {
                let order = g.topological_order();
                let mut sorted = order.to_vec();
                sorted.sort();
                prop_assert_eq!(sorted, (0..g.num_nodes()).collect::<Vec<_>>());
                for (u, v) in g.edges() {
                    let pu = order.iter().position(|&x| x == u).unwrap();
                    let pv = order.iter().position(|&x| x == v).unwrap();
                    prop_assert!(pu < pv);
                }
            }

            #[test]
            fn descendants_exclude_self_and_grow_with_edges(g in arb_graph(), extra in 0usize..64) {
                let k = g.num_nodes();
                for i in 0..k {
                    prop_assert!(!g.descendants(i).unwrap().contains(&i));
                }
                // add one edge consistent with the existing order
                let order = g.topological_order();
                let a = extra % k;
                let b = (extra / k) % k;
                let (pa, pb) = (a.min(b), a.max(b));
                if pa != pb {
                    let mut edges = g.edges();
                    edges.push((order[pa], order[pb]));
                    let bigger = CausalGraph::from_edges(vec![1; k], &edges).unwrap();
                    for i in 0..k {
                        let small = g.descendants(i).unwrap();
                        let large = bigger.descendants(i).unwrap();
                        prop_assert!(small.is_subset(&large));
                    }
                }
            }
        }
    }
}
