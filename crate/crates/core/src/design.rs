//! Randomization strategies for subject-level (`Z`) and edge-level (`W`)
//! treatments, all driven by [`SaltedHasher`] so an assignment is a pure
//! function of `(design, graph, salt)`.
//!
//! Unit keys: node `j` hashes as `"j"`, cluster `c` as `"c<c>"`, edge
//! `i -> j` as `"i-j"`. Two-stage designs draw node uniforms under the
//! derived salt `salt + ".u"`. Rejection attempt `a` uses `salt + "#a<a>"`.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClusterAssignment, Graph, GraphError};
use crate::hashing::SaltedHasher;
use crate::partition::partition;

/// Default rejection budget for [`conditional_draw`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("probability {0} outside [0,1]")]
    InvalidProbability(f64),
    #[error("cannot treat {n1} of {n} units")]
    TooManyTreated { n1: usize, n: usize },
    #[error("cluster assignment does not cover the graph: {0}")]
    Clusters(#[from] GraphError),
    #[error("edge-level design on a graph without edges")]
    NoEdges,
    #[error("{0} is not a subject-level design")]
    NotSubjectLevel(String),
    #[error("fixed node {node} out of range for n={n}")]
    InvalidFixedNode { node: usize, n: usize },
    #[error("fixed value {value} for node {node} is not 0 or 1")]
    InvalidFixedValue { node: usize, value: u8 },
    #[error("constraints cannot be satisfied: {0}")]
    Inconsistent(String),
    #[error("no draw satisfied the constraints in {attempts} attempts (acceptance rate < {:.2e})", 1.0 / *attempts as f64)]
    RejectionExhausted { attempts: usize },
    #[error("cannot parse design: {0}")]
    Parse(String),
}

/// A randomization strategy `π(Z)` or `π(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    IidBernoulli { p: f64 },
    CompleteRandomization { n1: usize },
    ClusterBernoulli { clusters: ClusterAssignment, p: f64 },
    TwoStageUniform { clusters: ClusterAssignment },
    GraphCluster { k: usize, p: f64, partition_seed: u64 },
    EdgeIid { p: f64 },
    SenderClustered { p: f64 },
    RecipientClustered { p: f64 },
}

/// Realized subject-level treatments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreatmentVector(Vec<u8>);

impl TreatmentVector {
    pub fn new(z: Vec<u8>) -> Result<Self, DesignError> {
        if let Some((node, &value)) = z.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(DesignError::InvalidFixedValue { node, value });
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn treated(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

/// Realized edge-level treatments, aligned with `graph.edges()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeTreatment {
    keys: Vec<(usize, usize)>,
    w: Vec<u8>,
}

impl EdgeTreatment {
    pub fn new(keys: Vec<(usize, usize)>, w: Vec<u8>) -> Result<Self, DesignError> {
        if keys.len() != w.len() {
            return Err(DesignError::Clusters(GraphError::SizeMismatch { expected: keys.len(), got: w.len() }));
        }
        Ok(Self { keys, w })
    }

    pub fn keys(&self) -> &[(usize, usize)] {
        &self.keys
    }

    pub fn values(&self) -> &[u8] {
        &self.w
    }

    pub fn get(&self, src: usize, dst: usize) -> Option<u8> {
        self.keys.iter().position(|&k| k == (src, dst)).map(|i| self.w[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u8)> + '_ {
        self.keys.iter().copied().zip(self.w.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    Subjects(TreatmentVector),
    Edges(EdgeTreatment),
}

fn check_probability(p: f64) -> Result<(), DesignError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DesignError::InvalidProbability(p))
    }
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::IidBernoulli { .. } => "iid_bernoulli",
            Design::CompleteRandomization { .. } => "complete_randomization",
            Design::ClusterBernoulli { .. } => "cluster_bernoulli",
            Design::TwoStageUniform { .. } => "two_stage_uniform",
            Design::GraphCluster { .. } => "graph_cluster",
            Design::EdgeIid { .. } => "edge_iid",
            Design::SenderClustered { .. } => "sender_clustered",
            Design::RecipientClustered { .. } => "recipient_clustered",
        }
    }

    pub fn is_edge_level(&self) -> bool {
        matches!(self, Design::EdgeIid { .. } | Design::SenderClustered { .. } | Design::RecipientClustered { .. })
    }

    /// Parameter checks that do not need a graph.
    pub fn validate(&self) -> Result<(), DesignError> {
        match self {
            Design::IidBernoulli { p }
            | Design::ClusterBernoulli { p, .. }
            | Design::GraphCluster { p, .. }
            | Design::EdgeIid { p }
            | Design::SenderClustered { p }
            | Design::RecipientClustered { p } => check_probability(*p),
            Design::CompleteRandomization { .. } | Design::TwoStageUniform { .. } => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DesignError> {
        let design: Design = serde_json::from_str(text).map_err(|e| DesignError::Parse(e.to_string()))?;
        design.validate()?;
        Ok(design)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("designs always serialize")
    }

    /// One-line summary with every parameter, e.g. `iid_bernoulli p=0.5`.
    /// [`Design::parse_description`] inverts it.
    pub fn description(&self) -> String {
        self.to_string()
    }

    pub fn parse_description(text: &str) -> Result<Self, DesignError> {
        let mut tokens = text.split_whitespace();
        let kind = tokens.next().ok_or_else(|| DesignError::Parse("empty description".into()))?;
        let mut params = std::collections::BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(|| DesignError::Parse(format!("expected key=value, got {tok:?}")))?;
            if params.insert(k, v).is_some() {
                return Err(DesignError::Parse(format!("repeated key {k:?}")));
            }
        }
        let take = |key: &str| params.get(key).copied().ok_or_else(|| DesignError::Parse(format!("{kind}: missing {key}")));
        let real = |key: &str| -> Result<f64, DesignError> {
            take(key)?.parse().map_err(|_| DesignError::Parse(format!("{key}: not a number")))
        };
        let count = |key: &str| -> Result<u64, DesignError> {
            take(key)?.parse().map_err(|_| DesignError::Parse(format!("{key}: not a nonnegative integer")))
        };
        let clusters = || -> Result<ClusterAssignment, DesignError> {
            let raw = take("labels")?;
            let labels = if raw.is_empty() {
                Vec::new()
            } else {
                raw.split(',')
                    .map(|s| s.parse::<usize>().map_err(|_| DesignError::Parse(format!("bad label {s:?}"))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let c = ClusterAssignment::new(labels)?;
            if c.k() as u64 != count("k")? {
                return Err(DesignError::Parse("k does not match labels".into()));
            }
            Ok(c)
        };
        let expected_keys: &[&str] = match kind {
            "iid_bernoulli" | "edge_iid" | "sender_clustered" | "recipient_clustered" => &["p"],
            "complete_randomization" => &["n1"],
            "cluster_bernoulli" => &["p", "k", "labels"],
            "two_stage_uniform" => &["k", "labels"],
            "graph_cluster" => &["k", "p", "partition_seed"],
            other => return Err(DesignError::Parse(format!("unknown design {other:?}"))),
        };
        if let Some(extra) = params.keys().find(|k| !expected_keys.contains(k)) {
            return Err(DesignError::Parse(format!("{kind}: unexpected key {extra:?}")));
        }
        let design = match kind {
            "iid_bernoulli" => Design::IidBernoulli { p: real("p")? },
            "edge_iid" => Design::EdgeIid { p: real("p")? },
            "sender_clustered" => Design::SenderClustered { p: real("p")? },
            "recipient_clustered" => Design::RecipientClustered { p: real("p")? },
            "complete_randomization" => Design::CompleteRandomization { n1: count("n1")? as usize },
            "cluster_bernoulli" => Design::ClusterBernoulli { clusters: clusters()?, p: real("p")? },
            "two_stage_uniform" => Design::TwoStageUniform { clusters: clusters()? },
            "graph_cluster" => {
                Design::GraphCluster { k: count("k")? as usize, p: real("p")?, partition_seed: count("partition_seed")? }
            }
            _ => unreachable!(),
        };
        design.validate()?;
        Ok(design)
    }

    /// Resolves the design against `graph`, partitioning once for
    /// [`Design::GraphCluster`].
    pub fn prepare<'a>(&'a self, graph: &'a Graph) -> Result<PreparedDesign<'a>, DesignError> {
        self.validate()?;
        let n = graph.node_count();
        let clusters = match self {
            Design::ClusterBernoulli { clusters, .. } | Design::TwoStageUniform { clusters } => {
                clusters.check_covers(graph)?;
                Some(Cow::Borrowed(clusters))
            }
            Design::GraphCluster { k, partition_seed, .. } => Some(Cow::Owned(partition(graph, *k, *partition_seed)?)),
            Design::CompleteRandomization { n1 } if *n1 > n => return Err(DesignError::TooManyTreated { n1: *n1, n }),
            _ => None,
        };
        if self.is_edge_level() && graph.edge_count() == 0 {
            return Err(DesignError::NoEdges);
        }
        Ok(PreparedDesign { design: self, graph, clusters })
    }
}

fn join_labels(c: &ClusterAssignment) -> String {
    c.labels().iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        match self {
            Design::IidBernoulli { p }
            | Design::EdgeIid { p }
            | Design::SenderClustered { p }
            | Design::RecipientClustered { p } => write!(f, " p={p:?}"),
            Design::CompleteRandomization { n1 } => write!(f, " n1={n1}"),
            Design::ClusterBernoulli { clusters, p } => {
                write!(f, " p={p:?} k={} labels={}", clusters.k(), join_labels(clusters))
            }
            Design::TwoStageUniform { clusters } => write!(f, " k={} labels={}", clusters.k(), join_labels(clusters)),
            Design::GraphCluster { k, p, partition_seed } => write!(f, " k={k} p={p:?} partition_seed={partition_seed}"),
        }
    }
}

/// A design bound to a graph, with any partition already computed.
#[derive(Debug, Clone)]
pub struct PreparedDesign<'a> {
    design: &'a Design,
    graph: &'a Graph,
    clusters: Option<Cow<'a, ClusterAssignment>>,
}

impl<'a> PreparedDesign<'a> {
    pub fn design(&self) -> &Design {
        self.design
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn clusters(&self) -> Option<&ClusterAssignment> {
        self.clusters.as_deref()
    }

    pub fn draw(&self, salt: &str) -> Result<Assignment, DesignError> {
        if self.design.is_edge_level() {
            Ok(Assignment::Edges(self.draw_edges(salt)))
        } else {
            let mut z = vec![0u8; self.graph.node_count()];
            self.draw_subjects_into(salt, &mut z)?;
            Ok(Assignment::Subjects(TreatmentVector(z)))
        }
    }

    pub fn draw_subjects(&self, salt: &str) -> Result<TreatmentVector, DesignError> {
        let mut z = vec![0u8; self.graph.node_count()];
        self.draw_subjects_into(salt, &mut z)?;
        Ok(TreatmentVector(z))
    }

    /// Writes a subject-level draw into `out` (length `n`).
    pub fn draw_subjects_into(&self, salt: &str, out: &mut [u8]) -> Result<(), DesignError> {
        let hasher = SaltedHasher::new(salt);
        match self.design {
            Design::IidBernoulli { p } => {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = u8::from(hasher.uniform_id(j) < *p);
                }
            }
            Design::CompleteRandomization { n1 } => {
                out.fill(0);
                for j in smallest_hashes(&hasher, 0..out.len(), *n1) {
                    out[j] = 1;
                }
            }
            Design::ClusterBernoulli { p, .. } | Design::GraphCluster { p, .. } => {
                let clusters = self.clusters.as_ref().expect("cluster design prepared with clusters");
                let level: Vec<u8> = (0..clusters.k()).map(|c| u8::from(hasher.uniform_prefixed("c", c) < *p)).collect();
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = level[clusters.label(j)];
                }
            }
            Design::TwoStageUniform { .. } => {
                let clusters = self.clusters.as_ref().expect("cluster design prepared with clusters");
                let probs: Vec<f64> = (0..clusters.k()).map(|c| hasher.uniform_prefixed("c", c)).collect();
                let unit = SaltedHasher::new(&format!("{salt}.u"));
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = u8::from(unit.uniform_id(j) < probs[clusters.label(j)]);
                }
            }
            d => return Err(DesignError::NotSubjectLevel(d.name().to_string())),
        }
        Ok(())
    }

    fn draw_edges(&self, salt: &str) -> EdgeTreatment {
        let hasher = SaltedHasher::new(salt);
        let edges = self.graph.edges();
        let w = match self.design {
            Design::EdgeIid { p } => edges.iter().map(|e| u8::from(hasher.uniform_pair(e.src, e.dst) < *p)).collect(),
            Design::SenderClustered { p } => edges.iter().map(|e| u8::from(hasher.uniform_id(e.src) < *p)).collect(),
            Design::RecipientClustered { p } => edges.iter().map(|e| u8::from(hasher.uniform_id(e.dst) < *p)).collect(),
            _ => unreachable!("subject-level design"),
        };
        EdgeTreatment { keys: edges.iter().map(|e| (e.src, e.dst)).collect(), w }
    }

    /// Validates `fixed` (node → value pairs) into a dense constraint mask.
    pub fn constraint_mask(&self, fixed: &[(usize, u8)]) -> Result<Vec<Option<u8>>, DesignError> {
        let n = self.graph.node_count();
        let mut mask = vec![None; n];
        for &(node, value) in fixed {
            if node >= n {
                return Err(DesignError::InvalidFixedNode { node, n });
            }
            if value > 1 {
                return Err(DesignError::InvalidFixedValue { node, value });
            }
            if mask[node].is_some_and(|v| v != value) {
                return Err(DesignError::Inconsistent(format!("node {node} fixed to both values")));
            }
            mask[node] = Some(value);
        }
        self.check_feasible(&mask)?;
        Ok(mask)
    }

    fn check_feasible(&self, mask: &[Option<u8>]) -> Result<(), DesignError> {
        let fixed = || mask.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)));
        let impossible = |p: f64, v: u8| (p == 0.0 && v == 1) || (p == 1.0 && v == 0);
        match self.design {
            Design::IidBernoulli { p } => {
                if let Some((i, v)) = fixed().find(|&(_, v)| impossible(*p, v)) {
                    return Err(DesignError::Inconsistent(format!("node {i} fixed to {v} but p={p}")));
                }
            }
            Design::CompleteRandomization { n1 } => {
                let ones = fixed().filter(|&(_, v)| v == 1).count();
                let zeros = fixed().filter(|&(_, v)| v == 0).count();
                if ones > *n1 || zeros > mask.len() - n1 {
                    return Err(DesignError::Inconsistent(format!(
                        "{ones} fixed treated and {zeros} fixed control incompatible with n1={n1} of {}",
                        mask.len()
                    )));
                }
            }
            Design::ClusterBernoulli { p, .. } | Design::GraphCluster { p, .. } => {
                let clusters = self.clusters.as_ref().expect("prepared");
                let mut level: Vec<Option<(usize, u8)>> = vec![None; clusters.k()];
                for (i, v) in fixed() {
                    if impossible(*p, v) {
                        return Err(DesignError::Inconsistent(format!("node {i} fixed to {v} but p={p}")));
                    }
                    let c = clusters.label(i);
                    match level[c] {
                        Some((other, w)) if w != v => {
                            return Err(DesignError::Inconsistent(format!(
                                "nodes {other} and {i} share cluster {c} but are fixed to {w} and {v}"
                            )))
                        }
                        _ => level[c] = Some((i, v)),
                    }
                }
            }
            Design::TwoStageUniform { .. } => {}
            d => return Err(DesignError::NotSubjectLevel(d.name().to_string())),
        }
        Ok(())
    }

    /// Conditional draw given a validated mask (see [`PreparedDesign::constraint_mask`]).
    pub fn conditional_into(
        &self,
        salt: &str,
        mask: &[Option<u8>],
        max_attempts: usize,
        out: &mut [u8],
    ) -> Result<(), DesignError> {
        match self.design {
            Design::IidBernoulli { p } => {
                let hasher = SaltedHasher::new(salt);
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = match mask[j] {
                        Some(v) => v,
                        None => u8::from(hasher.uniform_id(j) < *p),
                    };
                }
                Ok(())
            }
            Design::CompleteRandomization { n1 } => {
                let hasher = SaltedHasher::new(salt);
                let fixed_ones = mask.iter().filter(|v| **v == Some(1)).count();
                let free = mask.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(j, _)| j);
                for (slot, m) in out.iter_mut().zip(mask) {
                    *slot = m.unwrap_or(0);
                }
                for j in smallest_hashes(&hasher, free, n1 - fixed_ones) {
                    out[j] = 1;
                }
                Ok(())
            }
            _ => self.rejection_into(salt, mask, max_attempts, out),
        }
    }

    fn rejection_into(
        &self,
        salt: &str,
        mask: &[Option<u8>],
        max_attempts: usize,
        out: &mut [u8],
    ) -> Result<(), DesignError> {
        let fixed: Vec<(usize, u8)> = mask.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
        let clusters = self.clusters.as_ref().expect("cluster design prepared");
        for attempt in 0..max_attempts {
            let attempt_salt = format!("{salt}#a{attempt}");
            let hasher = SaltedHasher::new(&attempt_salt);
            // Constrained coordinates first; the full draw is computed only
            // for an accepted attempt.
            let accepted = match self.design {
                Design::ClusterBernoulli { p, .. } | Design::GraphCluster { p, .. } => {
                    fixed.iter().all(|&(i, v)| u8::from(hasher.uniform_prefixed("c", clusters.label(i)) < *p) == v)
                }
                Design::TwoStageUniform { .. } => {
                    let unit = SaltedHasher::new(&format!("{attempt_salt}.u"));
                    fixed.iter().all(|&(i, v)| {
                        u8::from(unit.uniform_id(i) < hasher.uniform_prefixed("c", clusters.label(i))) == v
                    })
                }
                d => return Err(DesignError::NotSubjectLevel(d.name().to_string())),
            };
            if accepted {
                return self.draw_subjects_into(&attempt_salt, out);
            }
        }
        Err(DesignError::RejectionExhausted { attempts: max_attempts })
    }
}

/// Indices with the `count` smallest hash values (ties by index).
fn smallest_hashes(hasher: &SaltedHasher, units: impl Iterator<Item = usize>, count: usize) -> Vec<usize> {
    let mut ranked: Vec<(f64, usize)> = units.map(|j| (hasher.uniform_id(j), j)).collect();
    if count < ranked.len() {
        ranked.select_nth_unstable_by(count, |a, b| a.partial_cmp(b).unwrap());
        ranked.truncate(count);
    }
    ranked.into_iter().map(|(_, j)| j).collect()
}

/// Draws a treatment assignment from `design` on `graph`.
pub fn draw(design: &Design, graph: &Graph, salt: &str) -> Result<Assignment, DesignError> {
    design.prepare(graph)?.draw(salt)
}

/// Draws from `design` conditional on the nodes in `fixed` taking the given
/// values. Exchangeable designs are sampled directly; cluster designs use
/// rejection sampling with at most `max_attempts` whole-design draws.
pub fn conditional_draw(
    design: &Design,
    graph: &Graph,
    salt: &str,
    fixed: &[(usize, u8)],
    max_attempts: usize,
) -> Result<TreatmentVector, DesignError> {
    let prepared = design.prepare(graph)?;
    let mask = prepared.constraint_mask(fixed)?;
    let mut z = vec![0u8; graph.node_count()];
    prepared.conditional_into(salt, &mask, max_attempts, &mut z)?;
    Ok(TreatmentVector(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_disjoint_cliques, generate_random_graph, load_edge_list, Edge};
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn subjects(a: Assignment) -> TreatmentVector {
        match a {
            Assignment::Subjects(z) => z,
            Assignment::Edges(_) => panic!("expected subject-level"),
        }
    }

    fn edges(a: Assignment) -> EdgeTreatment {
        match a {
            Assignment::Edges(w) => w,
            Assignment::Subjects(_) => panic!("expected edge-level"),
        }
    }

    fn clique_clusters(g: usize, m: usize) -> ClusterAssignment {
        ClusterAssignment::new((0..g * m).map(|i| i / m).collect()).unwrap()
    }

    #[test]
    fn iid_extremes() {
        let g = generate_random_graph(50, 0.1, 1).unwrap();
        let z = subjects(draw(&Design::IidBernoulli { p: 0.0 }, &g, "s").unwrap());
        assert_eq!(z.treated(), 0);
        let z = subjects(draw(&Design::IidBernoulli { p: 1.0 }, &g, "s").unwrap());
        assert_eq!(z.treated(), 50);
        assert!(matches!(draw(&Design::IidBernoulli { p: 1.2 }, &g, "s"), Err(DesignError::InvalidProbability(_))));
    }

    #[test]
    fn iid_matches_hash_definition() {
        let g = generate_random_graph(20, 0.1, 1).unwrap();
        let z = subjects(draw(&Design::IidBernoulli { p: 0.3 }, &g, "exp").unwrap());
        for j in 0..20 {
            assert_eq!(z.as_slice()[j], u8::from(crate::hash_uniform("exp", &j.to_string()) < 0.3));
        }
    }

    #[test]
    fn iid_marginal_fraction() {
        let g = load_edge_list("# n=100000\n", None, false).unwrap();
        let p = 0.3;
        let z = subjects(draw(&Design::IidBernoulli { p }, &g, "marginal").unwrap());
        let frac = z.treated() as f64 / 1e5;
        assert!((frac - p).abs() < 4.0 * (p * (1.0 - p) / 1e5).sqrt(), "{frac}");
    }

    #[test]
    fn cluster_bernoulli_is_all_or_nothing() {
        let g = generate_disjoint_cliques(2, 4).unwrap();
        let d = Design::ClusterBernoulli { clusters: clique_clusters(2, 4), p: 0.5 };
        for r in 0..50 {
            let z = subjects(draw(&d, &g, &format!("s{r}")).unwrap());
            assert!(z.as_slice()[..4].iter().all(|&v| v == z.as_slice()[0]));
            assert!(z.as_slice()[4..].iter().all(|&v| v == z.as_slice()[4]));
        }
    }

    #[test]
    fn cluster_design_needs_matching_labels() {
        let g = generate_disjoint_cliques(2, 4).unwrap();
        let d = Design::ClusterBernoulli { clusters: clique_clusters(2, 3), p: 0.5 };
        assert!(matches!(draw(&d, &g, "s"), Err(DesignError::Clusters(_))));
    }

    #[test]
    fn complete_randomization_treats_exactly_n1() {
        let g = generate_random_graph(30, 0.1, 2).unwrap();
        for n1 in [0, 1, 13, 30] {
            let z = subjects(draw(&Design::CompleteRandomization { n1 }, &g, "cr").unwrap());
            assert_eq!(z.treated(), n1);
        }
        assert!(matches!(
            draw(&Design::CompleteRandomization { n1: 31 }, &g, "cr"),
            Err(DesignError::TooManyTreated { .. })
        ));
    }

    #[test]
    fn graph_cluster_treats_partition_blocks() {
        let g = generate_disjoint_cliques(5, 4).unwrap();
        let d = Design::GraphCluster { k: 5, p: 0.5, partition_seed: 3 };
        let prepared = d.prepare(&g).unwrap();
        let clusters = prepared.clusters().unwrap().clone();
        let z = prepared.draw_subjects("gc").unwrap();
        for e in g.edges() {
            assert_eq!(clusters.label(e.src), clusters.label(e.dst));
            assert_eq!(z.as_slice()[e.src], z.as_slice()[e.dst]);
        }
    }

    #[test]
    fn two_stage_uses_cluster_probabilities() {
        let g = generate_disjoint_cliques(40, 50).unwrap();
        let d = Design::TwoStageUniform { clusters: clique_clusters(40, 50) };
        let z = subjects(draw(&d, &g, "ts").unwrap());
        let h = SaltedHasher::new("ts");
        for c in 0..40 {
            let p = h.uniform_prefixed("c", c);
            let frac = z.as_slice()[c * 50..(c + 1) * 50].iter().map(|&v| f64::from(v)).sum::<f64>() / 50.0;
            assert!((frac - p).abs() < 5.0 * (p * (1.0 - p) / 50.0).sqrt() + 1e-9, "cluster {c}: {frac} vs {p}");
        }
    }

    #[test]
    fn recipient_clustered_star_shares_value() {
        let edges = (1..=6).map(|i| Edge { src: i, dst: 0, weight: 1.0 }).collect();
        let star = Graph::new(7, true, edges).unwrap();
        for r in 0..20 {
            let w = edges_of(&Design::RecipientClustered { p: 0.5 }, &star, &format!("r{r}"));
            assert!(w.values().iter().all(|&v| v == w.values()[0]));
        }
    }

    fn edges_of(d: &Design, g: &Graph, salt: &str) -> EdgeTreatment {
        edges(draw(d, g, salt).unwrap())
    }

    #[test]
    fn edge_designs_share_by_endpoint() {
        let g = generate_random_graph(40, 0.2, 4).unwrap();
        let sender = edges_of(&Design::SenderClustered { p: 0.5 }, &g, "e");
        let recipient = edges_of(&Design::RecipientClustered { p: 0.5 }, &g, "e");
        for ((a, _), wa) in sender.iter() {
            for ((b, _), wb) in sender.iter() {
                if a == b {
                    assert_eq!(wa, wb);
                }
            }
        }
        for ((_, a), wa) in recipient.iter() {
            for ((_, b), wb) in recipient.iter() {
                if a == b {
                    assert_eq!(wa, wb);
                }
            }
        }
        let iid = edges_of(&Design::EdgeIid { p: 0.5 }, &g, "e");
        let h = SaltedHasher::new("e");
        for ((s, d), w) in iid.iter() {
            assert_eq!(w, u8::from(h.uniform(&format!("{s}-{d}")) < 0.5));
        }
        assert_eq!(iid.get(g.edges()[0].src, g.edges()[0].dst), Some(iid.values()[0]));
    }

    #[test]
    fn edge_design_on_edgeless_graph() {
        let g = load_edge_list("# n=3\n", None, false).unwrap();
        assert!(matches!(draw(&Design::EdgeIid { p: 0.5 }, &g, "s"), Err(DesignError::NoEdges)));
    }

    #[test]
    fn conditional_iid_respects_fixed() {
        let g = load_edge_list("# n=8\n0,1\n", None, false).unwrap();
        let d = Design::IidBernoulli { p: 0.5 };
        let runs = 4000;
        let mut ones = [0usize; 8];
        for r in 0..runs {
            let z = conditional_draw(&d, &g, &format!("c{r}"), &[(3, 1)], 10).unwrap();
            assert_eq!(z.as_slice()[3], 1);
            for j in 0..8 {
                ones[j] += usize::from(z.as_slice()[j]);
            }
        }
        let se = (0.25 / runs as f64).sqrt();
        for (j, &c) in ones.iter().enumerate() {
            if j != 3 {
                assert!((c as f64 / runs as f64 - 0.5).abs() < 4.0 * se, "node {j}: {c}");
            }
        }
    }

    #[test]
    fn conditional_cluster_inconsistency() {
        let g = generate_disjoint_cliques(3, 2).unwrap();
        let d = Design::ClusterBernoulli { clusters: clique_clusters(3, 2), p: 0.5 };
        let err = conditional_draw(&d, &g, "s", &[(0, 1), (1, 0)], 100).unwrap_err();
        assert!(matches!(err, DesignError::Inconsistent(_)));
    }

    #[test]
    fn conditional_complete_randomization_forced() {
        let g = generate_random_graph(9, 0.3, 1).unwrap();
        let d = Design::CompleteRandomization { n1: 1 };
        for r in 0..50 {
            let z = conditional_draw(&d, &g, &format!("f{r}"), &[(0, 1)], 10).unwrap();
            assert_eq!(z.as_slice()[0], 1);
            assert_eq!(z.treated(), 1);
        }
        assert!(conditional_draw(&d, &g, "x", &[(0, 1), (1, 1)], 10).is_err());
    }

    #[test]
    fn conditional_bad_inputs() {
        let g = generate_random_graph(5, 0.3, 1).unwrap();
        let d = Design::IidBernoulli { p: 0.5 };
        assert!(matches!(conditional_draw(&d, &g, "s", &[(7, 1)], 1), Err(DesignError::InvalidFixedNode { .. })));
        assert!(matches!(conditional_draw(&d, &g, "s", &[(1, 2)], 1), Err(DesignError::InvalidFixedValue { .. })));
        let never = Design::IidBernoulli { p: 0.0 };
        assert!(matches!(conditional_draw(&never, &g, "s", &[(1, 1)], 1), Err(DesignError::Inconsistent(_))));
    }

    #[test]
    fn rejection_budget_exhaustion() {
        let g = generate_disjoint_cliques(12, 1).unwrap();
        let d = Design::ClusterBernoulli { clusters: clique_clusters(12, 1), p: 0.5 };
        let fixed: Vec<(usize, u8)> = (0..12).map(|i| (i, 1)).collect();
        let err = conditional_draw(&d, &g, "s", &fixed, 5).unwrap_err();
        assert_eq!(err, DesignError::RejectionExhausted { attempts: 5 });
        assert!(err.to_string().contains("acceptance rate"));
    }

    #[test]
    fn conditional_cluster_matches_enumeration() {
        // 6 nodes in 3 clusters of 2; node 0 fixed to 1 pins cluster 0.
        let g = generate_disjoint_cliques(3, 2).unwrap();
        let p = 0.3;
        let d = Design::ClusterBernoulli { clusters: clique_clusters(3, 2), p };
        let draws = 10_000;
        let mut counts = [0usize; 8];
        for r in 0..draws {
            let z = conditional_draw(&d, &g, &format!("enum{r}"), &[(0, 1)], DEFAULT_MAX_ATTEMPTS).unwrap();
            let z = z.as_slice();
            assert_eq!((z[0], z[1]), (1, 1));
            counts[(z[0] as usize) | (z[2] as usize) << 1 | (z[4] as usize) << 2] += 1;
        }
        // Exhaustive: P(cluster levels = bits) ∝ Π p^b (1-p)^(1-b), restricted to bit 0 = 1.
        let mut expected = [0f64; 8];
        let mut total = 0.0;
        for bits in 0..8usize {
            let prob: f64 = (0..3).map(|c| if bits >> c & 1 == 1 { p } else { 1.0 - p }).product();
            if bits & 1 == 1 {
                expected[bits] = prob;
                total += prob;
            }
        }
        let mut chi2 = 0.0;
        let mut cells = 0;
        for bits in 0..8 {
            if expected[bits] > 0.0 {
                let e = expected[bits] / total * draws as f64;
                chi2 += (counts[bits] as f64 - e).powi(2) / e;
                cells += 1;
            } else {
                assert_eq!(counts[bits], 0);
            }
        }
        let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 0.001, "chi2={chi2} p={pval}");
    }

    #[test]
    fn conditional_two_stage_satisfies_constraints() {
        let g = generate_disjoint_cliques(4, 3).unwrap();
        let d = Design::TwoStageUniform { clusters: clique_clusters(4, 3) };
        for r in 0..30 {
            let z = conditional_draw(&d, &g, &format!("t{r}"), &[(0, 1), (4, 0), (11, 1)], DEFAULT_MAX_ATTEMPTS).unwrap();
            assert_eq!((z.as_slice()[0], z.as_slice()[4], z.as_slice()[11]), (1, 0, 1));
        }
    }

    #[test]
    fn descriptions() {
        assert_eq!(Design::IidBernoulli { p: 0.5 }.description(), "iid_bernoulli p=0.5");
        let d = Design::TwoStageUniform { clusters: clique_clusters(5, 2) };
        assert!(d.description().contains("k=5"));
        assert!(Design::parse_description("iid_bernoulli").is_err());
        assert!(Design::parse_description("mystery p=0.1").is_err());
        assert!(Design::parse_description("iid_bernoulli p=0.1 q=2").is_err());
    }

    #[test]
    fn json_shape() {
        let d = Design::from_json(r#"{"type":"iid_bernoulli","p":0.25}"#).unwrap();
        assert_eq!(d, Design::IidBernoulli { p: 0.25 });
        let c = Design::from_json(r#"{"type":"cluster_bernoulli","p":0.5,"clusters":[0,0,1]}"#).unwrap();
        assert_eq!(c, Design::ClusterBernoulli { clusters: ClusterAssignment::new(vec![0, 0, 1]).unwrap(), p: 0.5 });
        assert!(Design::from_json(r#"{"type":"iid_bernoulli","p":2}"#).is_err());
        assert!(Design::from_json(r#"{"type":"cluster_bernoulli","p":0.5,"clusters":[0,2]}"#).is_err());
    }

    fn arb_design() -> impl Strategy<Value = Design> {
        let p = 0.0f64..=1.0;
        let labels = proptest::collection::vec(0usize..6, 1..20).prop_map(|raw| {
            let mut seen = std::collections::BTreeMap::new();
            let labels: Vec<usize> = raw
                .iter()
                .map(|l| {
                    let next = seen.len();
                    *seen.entry(*l).or_insert(next)
                })
                .collect();
            ClusterAssignment::new(labels).unwrap()
        });
        prop_oneof![
            p.clone().prop_map(|p| Design::IidBernoulli { p }),
            (0usize..1000).prop_map(|n1| Design::CompleteRandomization { n1 }),
            (labels.clone(), p.clone()).prop_map(|(clusters, p)| Design::ClusterBernoulli { clusters, p }),
            labels.prop_map(|clusters| Design::TwoStageUniform { clusters }),
            (1usize..100, p.clone(), any::<u64>()).prop_map(|(k, p, partition_seed)| Design::GraphCluster {
                k,
                p,
                partition_seed
            }),
            p.clone().prop_map(|p| Design::EdgeIid { p }),
            p.clone().prop_map(|p| Design::SenderClustered { p }),
            p.prop_map(|p| Design::RecipientClustered { p }),
        ]
    }

    proptest! {
        #[test]
        fn description_round_trips(d in arb_design()) {
            prop_assert_eq!(Design::parse_description(&d.description()).unwrap(), d.clone());
            prop_assert_eq!(Design::from_json(&d.to_json()).unwrap(), d);
        }

        #[test]
        fn conditional_always_satisfies_fixed(seed in 0u64..1000, node in 0usize..12, value in 0u8..2) {
            let g = generate_disjoint_cliques(4, 3).unwrap();
            for d in [
                Design::IidBernoulli { p: 0.4 },
                Design::CompleteRandomization { n1: 5 },
                Design::ClusterBernoulli { clusters: clique_clusters(4, 3), p: 0.5 },
                Design::TwoStageUniform { clusters: clique_clusters(4, 3) },
            ] {
                let z = conditional_draw(&d, &g, &format!("p{seed}"), &[(node, value)], DEFAULT_MAX_ATTEMPTS).unwrap();
                prop_assert_eq!(z.as_slice()[node], value);
            }
        }
    }
}
