//! Graph partitioning for cluster-level designs.
//!
//! Synchronous label propagation (ties toward the smallest label) finds
//! communities; greedy merging of the smallest cluster or bisection of the
//! largest then brings the count to exactly `k`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{ClusterAssignment, Graph, GraphError};

const MAX_PROPAGATION_ROUNDS: usize = 50;

/// Partitions `graph` into exactly `k` non-empty clusters, deterministically
/// given `(graph, k, seed)`.
pub fn partition(graph: &Graph, k: usize, seed: u64) -> Result<ClusterAssignment, GraphError> {
    let n = graph.node_count();
    if k == 0 {
        return Err(GraphError::InvalidParameter("cluster count must be at least 1".into()));
    }
    if k > n {
        return Err(GraphError::InvalidParameter(format!("cannot form {k} clusters from {n} nodes")));
    }
    let adj = weighted_undirected(graph);
    let labels = propagate_labels(&adj, seed);
    let mut members = group(&labels);
    if members.len() > k {
        members = merge_smallest(&adj, &labels, members, k);
    }
    while members.len() < k {
        split_largest(&adj, &mut members);
    }
    let mut out = vec![usize::MAX; n];
    for (c, m) in members.iter().enumerate() {
        for &v in m {
            out[v] = c;
        }
    }
    ClusterAssignment::new(canonical(&out))
}

/// Fraction of edges whose endpoints fall in different clusters; zero for an
/// edgeless graph.
pub fn cut_fraction(graph: &Graph, clusters: &ClusterAssignment) -> Result<f64, GraphError> {
    clusters.check_covers(graph)?;
    if graph.edge_count() == 0 {
        return Ok(0.0);
    }
    let cut = graph.edges().iter().filter(|e| clusters.label(e.src) != clusters.label(e.dst)).count();
    Ok(cut as f64 / graph.edge_count() as f64)
}

fn weighted_undirected(graph: &Graph) -> Vec<Vec<(usize, f64)>> {
    let mut adj: Vec<HashMap<usize, f64>> = vec![HashMap::new(); graph.node_count()];
    for e in graph.edges() {
        *adj[e.src].entry(e.dst).or_default() += e.weight;
        *adj[e.dst].entry(e.src).or_default() += e.weight;
    }
    adj.into_iter()
        .map(|m| {
            let mut row: Vec<(usize, f64)> = m.into_iter().collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect()
}

fn propagate_labels(adj: &[Vec<(usize, f64)>], seed: u64) -> Vec<usize> {
    let n = adj.len();
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // A node votes for its own label with its mean incident weight; without it
    // two-node components swap labels forever.
    let self_weight: Vec<f64> =
        adj.iter().map(|row| if row.is_empty() { 0.0 } else { row.iter().map(|&(_, w)| w).sum::<f64>() / row.len() as f64 }).collect();
    let mut votes: HashMap<usize, f64> = HashMap::new();
    for _ in 0..MAX_PROPAGATION_ROUNDS {
        let mut next = labels.clone();
        for i in 0..n {
            if adj[i].is_empty() {
                continue;
            }
            votes.clear();
            *votes.entry(labels[i]).or_default() += self_weight[i];
            for &(j, w) in &adj[i] {
                *votes.entry(labels[j]).or_default() += w;
            }
            let mut best = (labels[i], f64::NEG_INFINITY);
            for (&label, &w) in &votes {
                if w > best.1 || (w == best.1 && label < best.0) {
                    best = (label, w);
                }
            }
            next[i] = best.0;
        }
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let fresh = map.len();
            *map.entry(l).or_insert(fresh)
        })
        .collect()
}

fn group(labels: &[usize]) -> Vec<Vec<usize>> {
    let canon = canonical(labels);
    let k = canon.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (v, &c) in canon.iter().enumerate() {
        members[c].push(v);
    }
    members
}

fn merge_smallest(adj: &[Vec<(usize, f64)>], labels: &[usize], members: Vec<Vec<usize>>, k: usize) -> Vec<Vec<usize>> {
    let canon = canonical(labels);
    let c = members.len();
    let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); c];
    for (i, row) in adj.iter().enumerate() {
        for &(j, w) in row {
            let (a, b) = (canon[i], canon[j]);
            if a != b {
                *links[a].entry(b).or_default() += w;
            }
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = members.into_iter().map(Some).collect();
    let mut by_size: BTreeSet<(usize, usize)> =
        members.iter().enumerate().map(|(l, m)| (m.as_ref().unwrap().len(), l)).collect();
    let mut alive = c;
    while alive > k {
        let (_, small) = by_size.pop_first().expect("more than k clusters remain");
        let target = links[small]
            .iter()
            .map(|(&l, &w)| (l, w))
            .fold(None, |best: Option<(usize, f64)>, (l, w)| match best {
                Some((bl, bw)) if bw > w || (bw == w && bl < l) => Some((bl, bw)),
                _ => Some((l, w)),
            })
            .map(|(l, _)| l)
            .unwrap_or_else(|| by_size.first().expect("another cluster exists").1);
        let moved = members[small].take().unwrap();
        let target_len = members[target].as_ref().unwrap().len();
        by_size.remove(&(target_len, target));
        members[target].as_mut().unwrap().extend(moved);
        by_size.insert((members[target].as_ref().unwrap().len(), target));
        let small_links = std::mem::take(&mut links[small]);
        for (other, w) in small_links {
            links[other].remove(&small);
            if other != target {
                *links[target].entry(other).or_default() += w;
                *links[other].entry(target).or_default() += w;
            }
        }
        alive -= 1;
    }
    members
        .into_iter()
        .flatten()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect()
}

fn split_largest(adj: &[Vec<(usize, f64)>], members: &mut Vec<Vec<usize>>) {
    let (idx, _) = members
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .expect("at least one cluster");
    let cluster = std::mem::take(&mut members[idx]);
    let inside: std::collections::HashSet<usize> = cluster.iter().copied().collect();
    // BFS order inside the cluster keeps each half roughly connected.
    let mut order = Vec::with_capacity(cluster.len());
    let mut visited = std::collections::HashSet::with_capacity(cluster.len());
    for &start in &cluster {
        if !visited.insert(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(u, _) in &adj[v] {
                if inside.contains(&u) && visited.insert(u) {
                    queue.push_back(u);
                }
            }
        }
    }
    let keep = order.len() - order.len() / 2;
    let mut first = order[..keep].to_vec();
    let mut second = order[keep..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    members[idx] = first;
    members.push(second);
}
