//! Peer exposure `T_i = Σ_j Ā_ij Z_j` and Monte Carlo diagnostics of its
//! distribution under a design.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Design, DesignError, TreatmentVector};
use crate::graph::Graph;

/// Degree up to which histograms enumerate the exact support of `T_i`.
pub const EXACT_SUPPORT_MAX_DEGREE: usize = 20;
/// Uniform bins over `[0, 1]` used above [`EXACT_SUPPORT_MAX_DEGREE`].
pub const HISTOGRAM_BINS: usize = 50;

const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposureError {
    #[error("vector has {got} entries but the graph has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Per-node exposure values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureVector(pub Vec<f64>);

impl ExposureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How peer treatment is summarised into a scalar exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureMeasure {
    /// Row-normalized weighted fraction of treated peers.
    #[default]
    Fraction,
    /// Weighted count of treated peers.
    Count,
}

impl ExposureMeasure {
    pub fn compute_into(self, graph: &Graph, z: &[u8], out: &mut [f64]) {
        match self {
            ExposureMeasure::Fraction => graph.peer_mean_binary(z, out),
            ExposureMeasure::Count => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = graph.neighbors(i).filter(|&(j, _)| z[j] != 0).map(|(_, w)| w).sum();
                }
            }
        }
    }
}

fn check_len(graph: &Graph, got: usize) -> Result<(), ExposureError> {
    if got == graph.node_count() {
        Ok(())
    } else {
        Err(ExposureError::SizeMismatch { expected: graph.node_count(), got })
    }
}

pub fn fraction_treated_peers(graph: &Graph, z: &TreatmentVector) -> Result<ExposureVector, ExposureError> {
    check_len(graph, z.len())?;
    let mut t = vec![0.0; z.len()];
    graph.peer_mean_binary(z.as_slice(), &mut t);
    Ok(ExposureVector(t))
}

/// `Σ_j D_j Ā_ij`; `d` may be real-valued.
pub fn fraction_adopting_peers(graph: &Graph, d: &[f64]) -> Result<ExposureVector, ExposureError> {
    check_len(graph, d.len())?;
    let mut t = vec![0.0; d.len()];
    graph.peer_mean(d, &mut t);
    Ok(ExposureVector(t))
}

pub fn treated_peer_count(graph: &Graph, z: &TreatmentVector) -> Result<ExposureVector, ExposureError> {
    check_len(graph, z.len())?;
    let mut t = vec![0.0; z.len()];
    ExposureMeasure::Count.compute_into(graph, z.as_slice(), &mut t);
    Ok(ExposureVector(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Histogram {
    /// Observed values of `T_i` with their relative frequencies, ascending.
    Exact { support: Vec<(f64, f64)> },
    /// Relative frequencies in uniform bins over `[0, 1]`.
    Binned { counts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeExposure {
    pub mean: f64,
    pub variance: f64,
    pub p0: f64,
    pub p1: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureDistribution {
    pub replications: usize,
    pub nodes: Vec<NodeExposure>,
}

#[derive(Clone)]
struct NodeAcc {
    sum: f64,
    sumsq: f64,
    zeros: u64,
    ones: u64,
    exact: Option<HashMap<u64, u64>>,
    bins: Option<Vec<u64>>,
}

impl NodeAcc {
    fn new(degree: usize) -> Self {
        let exact = degree <= EXACT_SUPPORT_MAX_DEGREE;
        NodeAcc {
            sum: 0.0,
            sumsq: 0.0,
            zeros: 0,
            ones: 0,
            exact: exact.then(HashMap::new),
            bins: (!exact).then(|| vec![0; HISTOGRAM_BINS]),
        }
    }

    fn push(&mut self, t: f64) {
        self.sum += t;
        self.sumsq += t * t;
        self.zeros += u64::from(t == 0.0);
        self.ones += u64::from(t == 1.0);
        if let Some(m) = &mut self.exact {
            *m.entry(t.to_bits()).or_default() += 1;
        }
        if let Some(b) = &mut self.bins {
            let idx = ((t * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            b[idx] += 1;
        }
    }

    fn merge(&mut self, other: NodeAcc) {
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.zeros += other.zeros;
        self.ones += other.ones;
        if let (Some(a), Some(b)) = (&mut self.exact, other.exact) {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
        }
        if let (Some(a), Some(b)) = (&mut self.bins, other.bins) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn finish(self, r: usize) -> NodeExposure {
        let rf = r as f64;
        let mean = self.sum / rf;
        let variance = if r > 1 { ((self.sumsq - rf * mean * mean) / (rf - 1.0)).max(0.0) } else { 0.0 };
        let histogram = match (self.exact, self.bins) {
            (Some(m), _) => {
                let mut support: Vec<(f64, f64)> = m.into_iter().map(|(k, c)| (f64::from_bits(k), c as f64 / rf)).collect();
                support.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                Histogram::Exact { support }
            }
            (None, Some(b)) => Histogram::Binned { counts: b.into_iter().map(|c| c as f64 / rf).collect() },
            (None, None) => unreachable!(),
        };
        NodeExposure { mean, variance, p0: self.zeros as f64 / rf, p1: self.ones as f64 / rf, histogram }
    }
}

/// Monte Carlo distribution of `T_i` for every node over `replications`
/// draws of `design` with salts `salt#1 .. salt#R`.
///
/// Replications are processed in fixed-size chunks whose partial sums are
/// combined in chunk order, so the result does not depend on thread count.
pub fn exposure_distribution(
    design: &Design,
    graph: &Graph,
    replications: usize,
    salt: &str,
) -> Result<ExposureDistribution, ExposureError> {
    if replications == 0 {
        return Err(ExposureError::NoReplications);
    }
    let prepared = design.prepare(graph)?;
    let n = graph.node_count();
    let fresh: Vec<NodeAcc> = (0..n).map(|i| NodeAcc::new(graph.degree(i))).collect();
    let chunks: Vec<(usize, usize)> =
        (0..replications.div_ceil(CHUNK)).map(|c| (c * CHUNK + 1, ((c + 1) * CHUNK).min(replications))).collect();
    let partials: Vec<Vec<NodeAcc>> = chunks
        .par_iter()
        .map(|&(lo, hi)| -> Result<Vec<NodeAcc>, ExposureError> {
            let mut acc = fresh.clone();
            let mut z = vec![0u8; n];
            let mut t = vec![0f64; n];
            for r in lo..=hi {
                prepared.draw_subjects_into(&format!("{salt}#{r}"), &mut z)?;
                graph.peer_mean_binary(&z, &mut t);
                for (a, &v) in acc.iter_mut().zip(&t) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, _>>()?;
    let mut total = fresh;
    for part in partials {
        for (a, b) in total.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    Ok(ExposureDistribution { replications, nodes: total.into_iter().map(|a| a.finish(replications)).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverdispersionReport {
    /// `Var_design(T_i) / Var_baseline(T_i)`; `None` where the baseline
    /// variance is zero.
    pub ratios: Vec<Option<f64>>,
    /// Mean of the defined per-node ratios.
    pub mean_ratio: Option<f64>,
    pub design_variance: Vec<f64>,
    pub baseline_variance: Vec<f64>,
}

/// Compares exposure variance under `design` against `baseline` using salts
/// `salt + ".design"` and `salt + ".baseline"`.
pub fn overdispersion_check(
    design: &Design,
    baseline: &Design,
    graph: &Graph,
    replications: usize,
    salt: &str,
) -> Result<OverdispersionReport, ExposureError> {
    let a = exposure_distribution(design, graph, replications, &format!("{salt}.design"))?;
    let b = exposure_distribution(baseline, graph, replications, &format!("{salt}.baseline"))?;
    let design_variance: Vec<f64> = a.nodes.iter().map(|x| x.variance).collect();
    let baseline_variance: Vec<f64> = b.nodes.iter().map(|x| x.variance).collect();
    let ratios: Vec<Option<f64>> = design_variance
        .iter()
        .zip(&baseline_variance)
        .map(|(&v, &base)| (base > 0.0).then(|| v / base))
        .collect();
    let defined: Vec<f64> = ratios.iter().flatten().copied().collect();
    let mean_ratio = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(OverdispersionReport { ratios, mean_ratio, design_variance, baseline_variance })
}
