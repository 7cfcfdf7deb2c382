//! Oracle data generation and Monte Carlo calibration of the tests.
//!
//! Random numbers come from ChaCha8 streams keyed by `(seed, purpose, unit)`,
//! so any single node's or edge's draws can be replayed without generating
//! the rest of the dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Design, DesignError, EdgeTreatment};
use crate::graph::{generate_disjoint_cliques, generate_random_graph, Graph, GraphError};
use crate::hashing::hash_u64;
use crate::inference::{self, FocalStrategy, InferenceError, TestConfig, TestStatistic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{what} has {got} entries but the graph has {expected} nodes")]
    SizeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid test specification: {0}")]
    InvalidTest(String),
    #[error("edge treatment has no entry for edge {src}->{dst}")]
    MissingEdge { src: usize, dst: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("simulation {sim}: {source}")]
    Inference { sim: usize, source: InferenceError },
}

/// Parameters of the outcome, compliance and edge-compliance models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Direct effect of own treatment.
    pub tau: f64,
    /// Coefficient on the fraction of treated peers.
    pub rho: f64,
    /// Coefficient on the fraction of adopting peers.
    pub theta: f64,
    /// Compliance intercept.
    pub alpha: f64,
    /// Compliance response to encouragement.
    pub beta: f64,
    /// Edge-compliance intercept.
    pub gamma: f64,
    /// Edge-compliance response to edge treatment.
    pub delta: f64,
    pub noise_sd: f64,
    pub tau_het_sd: f64,
    pub confound_sd: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tau: 0.0,
            rho: 0.0,
            theta: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
            noise_sd: 1.0,
            tau_het_sd: 0.0,
            confound_sd: 0.0,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let scales = [("noise_sd", self.noise_sd), ("tau_het_sd", self.tau_het_sd), ("confound_sd", self.confound_sd)];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let coefs = [
            ("tau", self.tau),
            ("rho", self.rho),
            ("theta", self.theta),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ];
        if let Some((name, v)) = coefs.iter().find(|(_, v)| !v.is_finite()) {
            return Err(SimError::InvalidParams(format!("{name} must be finite, got {v}")));
        }
        Ok(())
    }
}

// Stream tags: each purpose gets its own family of per-unit streams.
const NOISE: u64 = 1;
const HET: u64 = 2;
const CONFOUND: u64 = 3;
const COMPLIANCE: u64 = 4;
const EDGE: u64 = 5;

fn unit_rng(seed: u64, tag: u64, unit: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(unit);
    rng
}

fn normal(seed: u64, tag: u64, unit: usize) -> f64 {
    unit_rng(seed, tag, unit as u64).sample(StandardNormal)
}

fn logistic(seed: u64, tag: u64, unit: u64) -> f64 {
    let u: f64 = unit_rng(seed, tag, unit).sample(Open01);
    (u / (1.0 - u)).ln()
}

fn check_len(graph: &Graph, what: &'static str, got: usize) -> Result<(), SimError> {
    if got == graph.node_count() {
        Ok(())
    } else {
        Err(SimError::SizeMismatch { what, expected: graph.node_count(), got })
    }
}

/// Shared part of both outcome models: `h_i z_i + u_i + ξ_i` added to `base`.
fn add_noise(graph: &Graph, z: &[u8], params: &SimParams, y: &mut [f64]) {
    let seed = params.seed;
    if params.tau_het_sd > 0.0 {
        for (i, yi) in y.iter_mut().enumerate() {
            if z[i] == 1 {
                *yi += params.tau_het_sd * normal(seed, HET, i);
            }
        }
    }
    if params.confound_sd > 0.0 {
        // Latent U_i mixed with its peers' values, so neighbors share it.
        let eta: Vec<f64> = (0..y.len()).map(|i| normal(seed, CONFOUND, i)).collect();
        let mut peer = vec![0.0; y.len()];
        graph.peer_mean(&eta, &mut peer);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += params.confound_sd * (eta[i] + peer[i]) / std::f64::consts::SQRT_2;
        }
    }
    if params.noise_sd > 0.0 {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += params.noise_sd * normal(seed, NOISE, i);
        }
    }
}

/// `y_i = (τ + h_i) z_i + ρ T_i + u_i + ξ_i` with `T` the fraction of treated
/// peers.
pub fn simulate_outcomes(graph: &Graph, z: &[u8], params: &SimParams) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    check_len(graph, "z", z.len())?;
    let mut t = vec![0.0; z.len()];
    graph.peer_mean_binary(z, &mut t);
    let mut y: Vec<f64> = (0..z.len()).map(|i| params.tau * f64::from(z[i]) + params.rho * t[i]).collect();
    add_noise(graph, z, params, &mut y);
    Ok(y)
}

/// `y_i = (τ + h_i) z_i + θ Σ_j Ā_ij d_j + u_i + ξ_i`.
pub fn simulate_influence_outcomes(graph: &Graph, z: &[u8], d: &[u8], params: &SimParams) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    check_len(graph, "z", z.len())?;
    check_len(graph, "d", d.len())?;
    let mut f = vec![0.0; d.len()];
    graph.peer_mean_binary(d, &mut f);
    let mut y: Vec<f64> = (0..z.len()).map(|i| params.tau * f64::from(z[i]) + params.theta * f[i]).collect();
    add_noise(graph, z, params, &mut y);
    Ok(y)
}

/// Threshold compliance `d_j = 1{α + β z_j + ε_j > 0}` with standard
/// logistic `ε_j`.
pub fn simulate_compliance(z: &[u8], alpha: f64, beta: f64, seed: u64) -> Vec<u8> {
    z.iter()
        .enumerate()
        .map(|(j, &zj)| u8::from(alpha + beta * f64::from(zj) + logistic(seed, COMPLIANCE, j as u64) > 0.0))
        .collect()
}

/// Keeps edge `(i, j)` when `γ + δ w_ij + ν_ij > 0`, `ν` standard logistic.
pub fn simulate_edge_compliance(
    graph: &Graph,
    w: &EdgeTreatment,
    gamma: f64,
    delta: f64,
    seed: u64,
) -> Result<Graph, SimError> {
    let mut values = Vec::with_capacity(graph.edge_count());
    for e in graph.edges() {
        values.push(w.get(e.src, e.dst).ok_or(SimError::MissingEdge { src: e.src, dst: e.dst })?);
    }
    Ok(graph.retain_edges(|k, e| {
        let unit = ((e.src as u64) << 32) | e.dst as u64;
        gamma + delta * f64::from(values[k]) + logistic(seed, EDGE, unit) > 0.0
    }))
}

/// How outcomes respond to treatment in simulated datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// Constant (or heterogeneous) direct effect plus linear spillover on
    /// the fraction of treated peers.
    #[default]
    Spillover,
    /// Encouragement `z`, logistic compliance `d`, influence through the
    /// fraction of adopting peers.
    Influence,
}

/// A simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub z: Vec<u8>,
    pub d: Option<Vec<u8>>,
    pub y: Vec<f64>,
}

/// Draws `z` from the design under `salt`, then compliance (influence model
/// only) and outcomes from `params`.
pub fn simulate_dataset(
    graph: &Graph,
    design: &Design,
    params: &SimParams,
    model: OutcomeModel,
    salt: &str,
) -> Result<Dataset, SimError> {
    let z = design.prepare(graph)?.draw_subjects(salt)?.into_inner();
    dataset_for(graph, z, params, model)
}

fn dataset_for(graph: &Graph, z: Vec<u8>, params: &SimParams, model: OutcomeModel) -> Result<Dataset, SimError> {
    match model {
        OutcomeModel::Spillover => {
            let y = simulate_outcomes(graph, &z, params)?;
            Ok(Dataset { z, d: None, y })
        }
        OutcomeModel::Influence => {
            let d = simulate_compliance(&z, params.alpha, params.beta, params.seed);
            let y = simulate_influence_outcomes(graph, &z, &d, params)?;
            Ok(Dataset { z, d: Some(d), y })
        }
    }
}

/// Synthetic graph families for calibration runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi { n: usize, p: f64 },
    DisjointCliques { groups: usize, size: usize },
}

impl GraphSpec {
    pub fn build(&self, seed: u64) -> Result<Graph, GraphError> {
        match *self {
            GraphSpec::ErdosRenyi { n, p } => generate_random_graph(n, p, seed),
            GraphSpec::DisjointCliques { groups, size } => generate_disjoint_cliques(groups, size),
        }
    }
}

/// The data-generating side of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub graph: GraphSpec,
    pub design: Design,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default)]
    pub model: OutcomeModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalChoice {
    Random,
    IndependentSet,
}

/// Which test a calibration run applies to each simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestKind {
    SharpNull { tau0: f64 },
    Composite { tau_grid: Vec<f64> },
    Conditional { fraction: f64, focal: FocalChoice },
    /// Rejection means the cell `(τ, ρ)` of the simulation parameters is
    /// outside the acceptance region; both must lie on the grids.
    Region { tau_grid: Vec<f64>, rho_grid: Vec<f64> },
    Influence { tau0: f64, theta0: f64 },
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    #[serde(flatten)]
    pub kind: TestKind,
    #[serde(default)]
    pub statistic: TestStatistic,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_replications() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub n_sims: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// 95% Wilson score interval for the rejection rate.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_p: f64,
    pub alpha: f64,
}

pub const MIN_SIMS: usize = 100;

/// Wilson score interval for `k` successes in `n` trials at 95% confidence.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let (kf, nf) = (k as f64, n as f64);
    let phat = kf / nf;
    let denom = 1.0 + Z * Z / nf;
    let centre = (phat + Z * Z / (2.0 * nf)) / denom;
    let half = Z * (phat * (1.0 - phat) / nf + Z * Z / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Runs `test` on `n_sims` datasets drawn from `sim`. The graph is generated
/// once from the master seed `sim.params.seed`; each simulation redraws the
/// treatment, compliance and noise.
pub fn calibrate(test: &TestSpec, sim: &SimSpec, n_sims: usize, alpha: f64) -> Result<Calibration, SimError> {
    let graph = sim.graph.build(sim.params.seed)?;
    calibrate_on_graph(&graph, test, sim, n_sims, alpha)
}

/// [`calibrate`] on a caller-supplied graph; `sim.graph` is ignored.
pub fn calibrate_on_graph(
    graph: &Graph,
    test: &TestSpec,
    sim: &SimSpec,
    n_sims: usize,
    alpha: f64,
) -> Result<Calibration, SimError> {
    if n_sims < MIN_SIMS {
        return Err(SimError::InvalidTest(format!("n_sims must be at least {MIN_SIMS}, got {n_sims}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::InvalidTest(format!("alpha {alpha} outside (0,1)")));
    }
    sim.params.validate()?;
    sim.design.validate()?;
    if test.replications == 0 {
        return Err(SimError::InvalidTest("replications must be at least 1".into()));
    }
    validate_kind(&test.kind, sim)?;
    let master = sim.params.seed;
    let focal = match &test.kind {
        TestKind::Conditional { fraction, focal } => {
            let strategy = match focal {
                FocalChoice::Random => FocalStrategy::Random,
                FocalChoice::IndependentSet => FocalStrategy::IndependentSet,
            };
            let sel = inference::select_focal_units(graph, *fraction, &strategy, &format!("calib{master}.focal"))
                .map_err(|source| SimError::Inference { sim: 0, source })?;
            Some(sel.focal)
        }
        _ => None,
    };
    // Partition once for graph-cluster designs; every simulation reuses it.
    let design = match &sim.design {
        Design::GraphCluster { p, .. } => Design::ClusterBernoulli {
            clusters: sim.design.prepare(graph)?.clusters().expect("cluster design").clone(),
            p: *p,
        },
        d => d.clone(),
    };

    let outcomes: Vec<(bool, f64)> = (0..n_sims)
        .into_par_iter()
        .map(|s| -> Result<(bool, f64), SimError> {
            let mut params = sim.params.clone();
            params.seed = hash_u64(&format!("calib{master}"), &format!("sim{s}"));
            let salt = format!("calib{master}.sim{s}");
            let z = design.prepare(graph)?.draw_subjects(&format!("{salt}.z"))?.into_inner();
            let data = dataset_for(graph, z, &params, sim.model)?;
            let config = TestConfig::new(test.statistic, test.replications, format!("{salt}.test"));
            let p = run_test(graph, &design, &test.kind, &sim.params, &data, focal.as_ref(), alpha, &config)
                .map_err(|source| SimError::Inference { sim: s, source })?;
            Ok((p <= alpha, p))
        })
        .collect::<Result<_, _>>()?;

    let rejections = outcomes.iter().filter(|o| o.0).count();
    let (ci_low, ci_high) = wilson_interval(rejections, n_sims);
    Ok(Calibration {
        n_sims,
        rejections,
        rejection_rate: rejections as f64 / n_sims as f64,
        ci_low,
        ci_high,
        mean_p: outcomes.iter().map(|o| o.1).sum::<f64>() / n_sims as f64,
        alpha,
    })
}

fn validate_kind(kind: &TestKind, sim: &SimSpec) -> Result<(), SimError> {
    match kind {
        TestKind::Composite { tau_grid } if tau_grid.is_empty() => Err(SimError::InvalidTest("empty tau_grid".into())),
        TestKind::Region { tau_grid, rho_grid } => {
            if !tau_grid.contains(&sim.params.tau) || !rho_grid.contains(&sim.params.rho) {
                return Err(SimError::InvalidTest(format!(
                    "true cell (tau={}, rho={}) is not on the grid",
                    sim.params.tau, sim.params.rho
                )));
            }
            Ok(())
        }
        TestKind::Influence { .. } if sim.model != OutcomeModel::Influence => {
            Err(SimError::InvalidTest("influence test needs the influence outcome model".into()))
        }
        TestKind::Conditional { fraction, .. } if !(*fraction > 0.0 && *fraction < 1.0) => {
            Err(SimError::InvalidTest(format!("focal fraction {fraction} outside (0,1)")))
        }
        _ => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_test(
    graph: &Graph,
    design: &Design,
    kind: &TestKind,
    truth: &SimParams,
    data: &Dataset,
    focal: Option<&inference::FocalSet>,
    alpha: f64,
    config: &TestConfig,
) -> Result<f64, InferenceError> {
    let (y, z) = (&data.y, &data.z);
    Ok(match kind {
        TestKind::SharpNull { tau0 } => inference::test_sharp_null(y, z, design, graph, *tau0, config)?.p_value,
        TestKind::Composite { tau_grid } => {
            inference::test_composite_no_spillovers(y, z, design, graph, tau_grid, config)?.result.p_value
        }
        TestKind::Conditional { .. } => {
            let focal = focal.expect("focal set selected for conditional tests");
            inference::conditional_test_no_spillovers(y, z, design, graph, focal, config)?.p_value
        }
        TestKind::Region { tau_grid, rho_grid } => {
            let region = inference::acceptance_region(y, z, design, graph, tau_grid, rho_grid, alpha, config)?;
            let i = tau_grid.iter().position(|&t| t == truth.tau).expect("validated");
            let j = rho_grid.iter().position(|&r| r == truth.rho).expect("validated");
            region.p[i][j]
        }
        TestKind::Influence { tau0, theta0 } => {
            let d: Vec<f64> = data.d.as_ref().expect("influence model").iter().map(|&v| f64::from(v)).collect();
            inference::test_influence_sharp_null(y, z, &d, design, graph, *tau0, *theta0, config)?.p_value
        }
        TestKind::Naive => inference::naive_permutation_test(y, z, graph, config)?.p_value,
    })
}

/// The simulation parameter swept by [`power_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectParam {
    Tau,
    Rho,
    Theta,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerPoint {
    pub effect: f64,
    pub calibration: Calibration,
}

/// Calibrates at each effect size with the same master seed, so points share
/// graphs, treatments and noise (common random numbers).
pub fn power_curve(
    test: &TestSpec,
    sim: &SimSpec,
    param: EffectParam,
    grid: &[f64],
    n_sims: usize,
    alpha: f64,
) -> Result<Vec<PowerPoint>, SimError> {
    if grid.is_empty() {
        return Err(SimError::InvalidTest("empty effect grid".into()));
    }
    let graph = sim.graph.build(sim.params.seed)?;
    grid.iter()
        .map(|&effect| {
            let mut spec = sim.clone();
            match param {
                EffectParam::Tau => spec.params.tau = effect,
                EffectParam::Rho => spec.params.rho = effect,
                EffectParam::Theta => spec.params.theta = effect,
                EffectParam::Beta => spec.params.beta = effect,
            }
            let calibration = calibrate_on_graph(&graph, test, &spec, n_sims, alpha)?;
            Ok(PowerPoint { effect, calibration })
        })
        .collect()
}
