//! Interaction networks.
//!
//! Nodes are dense `0..n` indices. Edges carry nonnegative weights and are
//! stored once; undirected graphs expose symmetric neighbor queries. Row
//! normalized weights (`Ā_ij = A_ij / Σ_j A_ij`) are precomputed per row.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: negative weight {weight}")]
    NegativeWeight { line: usize, weight: f64 },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("line {line}: node id {node} out of range for n={n}")]
    NodeOutOfRange { line: usize, node: usize, n: usize },
    #[error("line {line}: duplicate edge ({src},{dst})")]
    DuplicateEdge { line: usize, src: usize, dst: usize },
    #[error("node {node} out of range for n={n}")]
    InvalidNode { node: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("size mismatch: expected {expected} entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// A weighted, directed or undirected interaction network.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: Vec<Edge>,
    covariates: Option<Vec<Vec<f64>>>,
    cluster_labels: Option<Vec<usize>>,
    // CSR rows: out-neighbors for directed graphs, all neighbors otherwise.
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
}

impl Graph {
    /// Builds a graph, validating node ids, weights, self-loops and duplicates.
    ///
    /// Error line numbers are 1-based edge positions.
    pub fn new(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(edges.len());
        for (idx, e) in edges.iter().enumerate() {
            check_edge(e, n, idx + 1)?;
            let key = if directed || e.src < e.dst { (e.src, e.dst) } else { (e.dst, e.src) };
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { line: idx + 1, src: e.src, dst: e.dst });
            }
        }
        Ok(Self::build_unchecked(n, directed, edges))
    }

    fn build_unchecked(n: usize, directed: bool, edges: Vec<Edge>) -> Self {
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.src] += 1;
            if !directed {
                degree[e.dst] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut targets = vec![0usize; total];
        let mut weights = vec![0f64; total];
        let mut cursor = offsets[..n].to_vec();
        for e in &edges {
            targets[cursor[e.src]] = e.dst;
            weights[cursor[e.src]] = e.weight;
            cursor[e.src] += 1;
            if !directed {
                targets[cursor[e.dst]] = e.src;
                weights[cursor[e.dst]] = e.weight;
                cursor[e.dst] += 1;
            }
        }
        // Sort each row by target so lookups can binary search.
        for i in 0..n {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let mut row: Vec<(usize, f64)> =
                targets[lo..hi].iter().copied().zip(weights[lo..hi].iter().copied()).collect();
            row.sort_by_key(|&(t, _)| t);
            for (k, (t, w)) in row.into_iter().enumerate() {
                targets[lo + k] = t;
                weights[lo + k] = w;
            }
        }
        let row_sums = (0..n).map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum()).collect();
        Graph {
            n,
            directed,
            edges,
            covariates: None,
            cluster_labels: None,
            offsets,
            targets,
            weights,
            row_sums,
        }
    }

    pub fn with_covariates(mut self, covariates: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        if covariates.len() != self.n {
            return Err(GraphError::SizeMismatch { expected: self.n, got: covariates.len() });
        }
        self.covariates = Some(covariates);
        Ok(self)
    }

    pub fn with_cluster_labels(mut self, labels: Vec<usize>) -> Result<Self, GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::SizeMismatch { expected: self.n, got: labels.len() });
        }
        self.cluster_labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn covariates(&self) -> Option<&[Vec<f64>]> {
        self.covariates.as_deref()
    }

    pub fn cluster_labels(&self) -> Option<&[usize]> {
        self.cluster_labels.as_deref()
    }

    /// Peers of `i` (out-neighbors when directed) with their raw weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        self.targets[lo..hi].iter().copied().zip(self.weights[lo..hi].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Σ_j A_ij for row `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    /// Raw weight `A_ij`, zero when no edge exists.
    pub fn weight(&self, i: usize, j: usize) -> Result<f64, GraphError> {
        self.check_node(i)?;
        self.check_node(j)?;
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        Ok(match self.targets[lo..hi].binary_search(&j) {
            Ok(pos) => self.weights[lo + pos],
            Err(_) => 0.0,
        })
    }

    /// Row-normalized weight `Ā_ij`; zero for every `j` when `i` has no weight.
    pub fn row_weight(&self, i: usize, j: usize) -> Result<f64, GraphError> {
        let w = self.weight(i, j)?;
        let s = self.row_sums[i];
        Ok(if s > 0.0 { w / s } else { 0.0 })
    }

    /// Weighted mean of `values` over the peers of each node, using row
    /// normalized weights. Isolated nodes get zero.
    pub fn peer_mean(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.n);
        for (i, slot) in out.iter_mut().enumerate() {
            let s = self.row_sums[i];
            if s > 0.0 {
                let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
                let mut acc = 0.0;
                for k in lo..hi {
                    acc += self.weights[k] * values[self.targets[k]];
                }
                *slot = acc / s;
            } else {
                *slot = 0.0;
            }
        }
    }

    /// Same as [`Graph::peer_mean`] but for 0/1 indicators.
    pub fn peer_mean_binary(&self, values: &[u8], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.n);
        for (i, slot) in out.iter_mut().enumerate() {
            let s = self.row_sums[i];
            if s > 0.0 {
                let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
                let mut acc = 0.0;
                for k in lo..hi {
                    if values[self.targets[k]] != 0 {
                        acc += self.weights[k];
                    }
                }
                *slot = acc / s;
            } else {
                *slot = 0.0;
            }
        }
    }

    /// Undirected adjacency sets (union of in- and out-edges).
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }

    /// Copy with every weight set to 1.
    pub fn binarized(&self) -> Graph {
        let edges = self.edges.iter().map(|e| Edge { weight: 1.0, ..*e }).collect();
        let mut g = Graph::build_unchecked(self.n, self.directed, edges);
        g.covariates = self.covariates.clone();
        g.cluster_labels = self.cluster_labels.clone();
        g
    }

    /// Subgraph keeping the edges whose index satisfies `keep`.
    pub fn retain_edges(&self, mut keep: impl FnMut(usize, &Edge) -> bool) -> Graph {
        let edges = self.edges.iter().enumerate().filter(|(i, e)| keep(*i, e)).map(|(_, e)| *e).collect();
        let mut g = Graph::build_unchecked(self.n, self.directed, edges);
        g.covariates = self.covariates.clone();
        g.cluster_labels = self.cluster_labels.clone();
        g
    }

    fn check_node(&self, i: usize) -> Result<(), GraphError> {
        if i < self.n {
            Ok(())
        } else {
            Err(GraphError::InvalidNode { node: i, n: self.n })
        }
    }
}

fn check_edge(e: &Edge, n: usize, line: usize) -> Result<(), GraphError> {
    if !(e.weight >= 0.0) || !e.weight.is_finite() {
        return Err(GraphError::NegativeWeight { line, weight: e.weight });
    }
    if e.src == e.dst {
        return Err(GraphError::SelfLoop { line, node: e.src });
    }
    for node in [e.src, e.dst] {
        if node >= n {
            return Err(GraphError::NodeOutOfRange { line, node, n });
        }
    }
    Ok(())
}

/// A partition of the nodes into `k` non-empty clusters labelled `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>) -> Result<Self, GraphError> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(GraphError::EmptyCluster(empty));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member lists indexed by cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (node, &l) in self.labels.iter().enumerate() {
            m[l].push(node);
        }
        m
    }

    /// Checks that the assignment covers exactly the nodes of `graph`.
    pub fn check_covers(&self, graph: &Graph) -> Result<(), GraphError> {
        if self.labels.len() != graph.node_count() {
            return Err(GraphError::SizeMismatch { expected: graph.node_count(), got: self.labels.len() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for ClusterAssignment {
    type Error = GraphError;

    fn try_from(labels: Vec<usize>) -> Result<Self, Self::Error> {
        ClusterAssignment::new(labels)
    }
}

impl From<ClusterAssignment> for Vec<usize> {
    fn from(c: ClusterAssignment) -> Self {
        c.labels
    }
}

/// Parsed `# key=value` header of an edge-list file.
#[derive(Debug, Default, Clone, Copy)]
struct EdgeListHeader {
    n: Option<usize>,
    directed: Option<bool>,
}

fn parse_header(line: &str, line_no: usize, header: &mut EdgeListHeader) -> Result<(), GraphError> {
    for token in line.trim_start_matches('#').split_whitespace() {
        let Some((key, value)) = token.split_once('=') else { continue };
        let bad = |msg: &str| GraphError::Malformed { line: line_no, msg: format!("{msg}: {token:?}") };
        match key {
            "n" => header.n = Some(value.parse().map_err(|_| bad("bad node count"))?),
            "directed" => {
                header.directed = Some(match value {
                    "0" | "false" => false,
                    "1" | "true" => true,
                    _ => return Err(bad("bad directed flag")),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Parses an edge list: an optional `# n=<count> directed=<0|1>` header and
/// `src,dst[,weight]` rows. Other `#` lines are comments.
///
/// `n` overrides the header count; without either, `n = 1 + max id`.
/// `directed` is used when the header does not say.
pub fn load_edge_list(text: &str, n: Option<usize>, directed: bool) -> Result<Graph, GraphError> {
    let mut header = EdgeListHeader::default();
    let mut rows: Vec<(usize, Edge)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_header(line, line_no, &mut header)?;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(GraphError::Malformed { line: line_no, msg: format!("expected src,dst[,weight], got {line:?}") });
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| GraphError::Malformed { line: line_no, msg: format!("bad node id {s:?}") })
        };
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| GraphError::Malformed { line: line_no, msg: format!("bad weight {w:?}") })?,
            None => 1.0,
        };
        rows.push((line_no, Edge { src: id(fields[0])?, dst: id(fields[1])?, weight }));
    }
    let directed = header.directed.unwrap_or(directed);
    let n = n.or(header.n).unwrap_or_else(|| rows.iter().map(|(_, e)| e.src.max(e.dst) + 1).max().unwrap_or(0));
    let mut seen = HashSet::with_capacity(rows.len());
    for (line, e) in &rows {
        check_edge(e, n, *line)?;
        let key = if directed || e.src < e.dst { (e.src, e.dst) } else { (e.dst, e.src) };
        if !seen.insert(key) {
            return Err(GraphError::DuplicateEdge { line: *line, src: e.src, dst: e.dst });
        }
    }
    Ok(Graph::build_unchecked(n, directed, rows.into_iter().map(|(_, e)| e).collect()))
}

/// Ingests an edge list whose node ids are arbitrary strings. Ids are mapped
/// to dense indices in order of first appearance; the mapping is returned so
/// it can be persisted next to any outputs.
pub fn load_labeled_edge_list(text: &str, directed: bool) -> Result<(Graph, Vec<String>), GraphError> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut remapped = String::new();
    let mut intern = |s: &str| -> usize {
        if let Some(&i) = index.get(s) {
            return i;
        }
        index.insert(s.to_string(), names.len());
        names.push(s.to_string());
        names.len() - 1
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            remapped.push('\n');
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(GraphError::Malformed { line: idx + 1, msg: format!("expected src,dst[,weight], got {line:?}") });
        }
        let (a, b) = (intern(fields[0]), intern(fields[1]));
        let _ = write!(remapped, "{a},{b}");
        if let Some(w) = fields.get(2) {
            let _ = write!(remapped, ",{w}");
        }
        remapped.push('\n');
    }
    let graph = load_edge_list(&remapped, Some(names.len()), directed)?;
    Ok((graph, names))
}

/// Serializes a graph in the edge-list format read by [`load_edge_list`].
pub fn write_edge_list(graph: &Graph) -> String {
    let mut out = String::with_capacity(graph.edge_count() * 12 + 32);
    let _ = writeln!(out, "# n={} directed={}", graph.node_count(), u8::from(graph.is_directed()));
    for e in graph.edges() {
        if e.weight == 1.0 {
            let _ = writeln!(out, "{},{}", e.src, e.dst);
        } else {
            let _ = writeln!(out, "{},{},{}", e.src, e.dst, e.weight);
        }
    }
    out
}

/// `g` disjoint cliques of `m` nodes each; node `i` belongs to clique `i / m`
/// and the clique index is stored as its cluster label.
pub fn generate_disjoint_cliques(g: usize, m: usize) -> Result<Graph, GraphError> {
    if g == 0 || m == 0 {
        return Err(GraphError::InvalidParameter(format!("clique count and size must be positive (g={g}, m={m})")));
    }
    let mut edges = Vec::with_capacity(g * m * (m - 1) / 2);
    for c in 0..g {
        let base = c * m;
        for a in 0..m {
            for b in (a + 1)..m {
                edges.push(Edge { src: base + a, dst: base + b, weight: 1.0 });
            }
        }
    }
    let labels = (0..g * m).map(|i| i / m).collect();
    Graph::build_unchecked(g * m, false, edges).with_cluster_labels(labels)
}

/// Undirected Erdős–Rényi graph, deterministic given `seed`.
pub fn generate_random_graph(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidParameter(format!("edge probability {p} outside [0,1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < p {
                edges.push(Edge { src: a, dst: b, weight: 1.0 });
            }
        }
    }
    Ok(Graph::build_unchecked(n, false, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> Graph {
        let edges = (1..=leaves).map(|j| Edge { src: 0, dst: j, weight: 1.0 }).collect();
        Graph::new(leaves + 1, false, edges).unwrap()
    }

    #[test]
    fn default_weight_and_inferred_size() {
        let g = load_edge_list("0,1\n1,2", None, false).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn duplicate_undirected_edge_rejected() {
        let err = load_edge_list("0,1,0.5\n0,1,0.5", None, false).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { line: 2, .. }));
        let err = load_edge_list("0,1\n1,0", None, false).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { line: 2, .. }));
        // Reversed pairs are distinct directed edges.
        assert_eq!(load_edge_list("0,1\n1,0", None, true).unwrap().edge_count(), 2);
    }

    #[test]
    fn ingestion_errors_carry_line_numbers() {
        assert!(matches!(load_edge_list("0,1\n\n2", None, false), Err(GraphError::Malformed { line: 3, .. })));
        assert!(matches!(load_edge_list("0,1,-1", None, false), Err(GraphError::NegativeWeight { line: 1, .. })));
        assert!(matches!(load_edge_list("# c\n3,3", None, false), Err(GraphError::SelfLoop { line: 2, node: 3 })));
        assert!(matches!(
            load_edge_list("0,5", Some(3), false),
            Err(GraphError::NodeOutOfRange { line: 1, node: 5, n: 3 })
        ));
        assert!(matches!(load_edge_list("0,x", None, false), Err(GraphError::Malformed { line: 1, .. })));
    }

    #[test]
    fn header_sets_size_and_direction() {
        let g = load_edge_list("# n=10 directed=1\n0,1\n", None, false).unwrap();
        assert_eq!(g.node_count(), 10);
        assert!(g.is_directed());
        assert_eq!(g.row_sum(1), 0.0);
    }

    #[test]
    fn labeled_ids_map_in_order_of_appearance() {
        let (g, names) = load_labeled_edge_list("alice,bob\nbob,carol,2\n", false).unwrap();
        assert_eq!(names, vec!["alice", "bob", "carol"]);
        assert_eq!(g.weight(1, 2).unwrap(), 2.0);
    }

    #[test]
    fn cliques_construction() {
        let g = generate_disjoint_cliques(2, 3).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.cluster_labels().unwrap(), &[0, 0, 0, 1, 1, 1]);

        let single = generate_disjoint_cliques(1, 1).unwrap();
        assert_eq!((single.node_count(), single.edge_count()), (1, 0));

        assert!(generate_disjoint_cliques(0, 3).is_err());
        assert!(generate_disjoint_cliques(3, 0).is_err());
    }

    #[test]
    fn cliques_degree_sequence_is_constant() {
        let g = generate_disjoint_cliques(50, 10).unwrap();
        // exhaustive: count incident edges per node from the raw edge list
        let mut deg = vec![0usize; g.node_count()];
        for e in g.edges() {
            deg[e.src] += 1;
            deg[e.dst] += 1;
            assert_eq!(e.src / 10, e.dst / 10);
        }
        assert!(deg.iter().all(|&d| d == 9));
        assert!((0..g.node_count()).all(|i| g.degree(i) == 9));
    }

    #[test]
    fn random_graph_extremes() {
        assert_eq!(generate_random_graph(5, 0.0, 1).unwrap().edge_count(), 0);
        assert_eq!(generate_random_graph(5, 1.0, 1).unwrap().edge_count(), 10);
        assert!(generate_random_graph(5, 1.5, 1).is_err());
        assert!(generate_random_graph(5, -0.1, 1).is_err());
    }

    #[test]
    fn random_graph_edge_count_is_binomial() {
        let g = generate_random_graph(1000, 0.01, 7).unwrap();
        let pairs = 1000.0 * 999.0 / 2.0;
        let mean = pairs * 0.01;
        let sd = (pairs * 0.01 * 0.99f64).sqrt();
        assert!((g.edge_count() as f64 - mean).abs() < 4.0 * sd, "{}", g.edge_count());
        assert_eq!(g, generate_random_graph(1000, 0.01, 7).unwrap());
    }

    #[test]
    fn row_weights() {
        let g = star(4);
        for j in 1..=4 {
            assert_eq!(g.row_weight(0, j).unwrap(), 0.25);
        }
        let weighted = load_edge_list("0,1,2.0\n0,2,1.0\n0,3,1.0\n", None, false).unwrap();
        let row: Vec<f64> = (1..=3).map(|j| weighted.row_weight(0, j).unwrap()).collect();
        assert_eq!(row, vec![0.5, 0.25, 0.25]);
        assert!(g.row_weight(0, 9).is_err());
    }

    #[test]
    fn isolated_node_has_zero_row() {
        let g = load_edge_list("# n=4\n0,1\n", None, false).unwrap();
        for j in 0..4 {
            assert_eq!(g.row_weight(3, j).unwrap(), 0.0);
        }
    }

    #[test]
    fn binarize_drops_weights() {
        let g = load_edge_list("0,1,2.0\n0,2,1.0\n", None, false).unwrap();
        let b = g.binarized();
        assert_eq!(b.row_weight(0, 1).unwrap(), 0.5);
    }

    #[test]
    fn cluster_assignment_rejects_gaps() {
        assert!(matches!(ClusterAssignment::new(vec![0, 2]), Err(GraphError::EmptyCluster(1))));
        let c = ClusterAssignment::new(vec![1, 0, 1]).unwrap();
        assert_eq!(c.k(), 2);
        assert_eq!(c.members(), vec![vec![1], vec![0, 2]]);
    }

    #[test]
    fn edge_list_round_trip_large() {
        let g = generate_random_graph(600, 0.0556, 11).unwrap();
        let text = write_edge_list(&g);
        let back = load_edge_list(&text, None, false).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_edge_list(&back), text);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = Graph> {
            (2usize..15, any::<bool>()).prop_flat_map(|(n, directed)| {
                proptest::collection::btree_map((0..n, 0..n), 0.0f64..5.0, 0..40).prop_map(move |m| {
                    let mut seen = HashSet::new();
                    let edges = m
                        .into_iter()
                        .filter(|((a, b), _)| a != b)
                        .filter(|((a, b), _)| directed || seen.insert((*a.min(b), *a.max(b))))
                        .map(|((src, dst), weight)| Edge { src, dst, weight })
                        .collect();
                    Graph::new(n, directed, edges).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn row_sums_are_zero_or_one(g in arb_graph()) {
                for i in 0..g.node_count() {
                    let s: f64 = (0..g.node_count()).map(|j| g.row_weight(i, j).unwrap()).sum();
                    if g.row_sum(i) > 0.0 {
                        prop_assert!((s - 1.0).abs() < 1e-12);
                    } else {
                        prop_assert_eq!(s, 0.0);
                    }
                }
            }

            #[test]
            fn undirected_neighbors_are_symmetric(g in arb_graph()) {
                if !g.is_directed() {
                    for i in 0..g.node_count() {
                        for (j, w) in g.neighbors(i) {
                            prop_assert_eq!(g.weight(j, i).unwrap(), w);
                        }
                    }
                }
            }
        }
    }
}
