//! Choosing focal units for conditional randomization tests.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::graph::Graph;
use crate::hashing::SaltedHasher;

/// A nonempty, strict subset of node ids, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FocalSet(Vec<usize>);

impl FocalSet {
    pub fn new(mut nodes: Vec<usize>, n: usize) -> Result<Self, InferenceError> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(InferenceError::Focal("focal set is empty".into()));
        }
        if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
            return Err(InferenceError::Focal(format!("node {bad} out of range for n={n}")));
        }
        if nodes.len() == n {
            return Err(InferenceError::Focal("every node is focal; nothing left to re-randomize".into()));
        }
        Ok(Self(nodes))
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalStrategy {
    Random,
    IndependentSet,
    Provided(Vec<usize>),
}

/// Selected focal units. `budget_met` is false when an independent set
/// smaller than the requested budget was all that could be found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocalSelection {
    pub focal: FocalSet,
    pub budget: usize,
    pub budget_met: bool,
}

/// Picks `⌈fraction·n⌉` focal nodes.
///
/// `Random` takes the nodes with the smallest hashes under `salt`.
/// `IndependentSet` grows a set with no two adjacent members by repeatedly
/// taking a node of minimum remaining degree (ties broken by hash rank) and
/// discarding its neighbors, stopping at the budget. `Provided` only
/// validates the given nodes; `fraction` is ignored.
pub fn select_focal_units(
    graph: &Graph,
    fraction: f64,
    strategy: &FocalStrategy,
    salt: &str,
) -> Result<FocalSelection, InferenceError> {
    let n = graph.node_count();
    if let FocalStrategy::Provided(nodes) = strategy {
        let focal = FocalSet::new(nodes.clone(), n)?;
        return Ok(FocalSelection { budget: focal.len(), focal, budget_met: true });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(InferenceError::Focal(format!("fraction {fraction} outside (0,1)")));
    }
    let budget = (fraction * n as f64).ceil() as usize;
    let hasher = SaltedHasher::new(salt);
    let rank: Vec<f64> = (0..n).map(|j| hasher.uniform_id(j)).collect();
    let nodes = match strategy {
        FocalStrategy::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rank[a].total_cmp(&rank[b]).then(a.cmp(&b)));
            order.truncate(budget);
            order
        }
        FocalStrategy::IndependentSet => greedy_independent_set(graph, &rank, budget),
        FocalStrategy::Provided(_) => unreachable!(),
    };
    let budget_met = nodes.len() >= budget;
    Ok(FocalSelection { focal: FocalSet::new(nodes, n)?, budget, budget_met })
}

fn greedy_independent_set(graph: &Graph, rank: &[f64], budget: usize) -> Vec<usize> {
    let adj = graph.undirected_neighbors();
    let n = adj.len();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut removed = vec![false; n];
    // Order-preserving integer key for the hash rank, so the heap is total.
    let key = |j: usize| rank[j].to_bits();
    let mut heap: BinaryHeap<Reverse<(usize, u64, usize)>> = (0..n).map(|j| Reverse((degree[j], key(j), j))).collect();
    let mut chosen = Vec::with_capacity(budget);
    while chosen.len() < budget {
        let Some(Reverse((deg, _, v))) = heap.pop() else { break };
        if removed[v] || deg != degree[v] {
            continue;
        }
        chosen.push(v);
        removed[v] = true;
        for &u in &adj[v] {
            if removed[u] {
                continue;
            }
            removed[u] = true;
            for &w in &adj[u] {
                if !removed[w] {
                    degree[w] -= 1;
                    heap.push(Reverse((degree[w], key(w), w)));
                }
            }
        }
    }
    chosen
}
