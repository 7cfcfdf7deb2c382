//! Fisherian randomization tests for spillovers and social influence.
//!
//! Every test follows the same recipe: residualize the outcomes under a sharp
//! null, then compare the observed statistic with its distribution over `R`
//! fresh draws from the design, `z* = draw(design, salt#r)` for `r = 1..R`.
//! The p-value is `(1 + #{T_null ≥ T_obs}) / (R + 1)`. Replications run in
//! parallel but are keyed by salt, so results do not depend on the schedule.

mod focal;
mod statistic;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::design::{Design, DesignError, PreparedDesign, DEFAULT_MAX_ATTEMPTS};
use crate::exposure::ExposureMeasure;
use crate::graph::Graph;

pub use focal::{select_focal_units, FocalSelection, FocalSet, FocalStrategy};
pub use statistic::{exposure_slope, joint_fit, JointFit, Sides, TestStatistic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error("{what} has {got} entries but the graph has {expected} nodes")]
    SizeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("treatment vector must contain only 0 and 1")]
    NonBinaryTreatment,
    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("alpha {0} outside (0,1)")]
    InvalidAlpha(f64),
    #[error("test statistic is degenerate (rank-deficient fit) on the observed data")]
    DegenerateObserved,
    #[error("test statistic is degenerate in {degenerate} of {replications} null replications")]
    TooManyDegenerate { degenerate: usize, replications: usize },
    #[error("{0}")]
    Focal(String),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Knobs shared by every test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestConfig {
    pub statistic: TestStatistic,
    pub replications: usize,
    pub salt: String,
    pub exposure: ExposureMeasure,
    /// Rejection-sampling budget for conditional draws.
    pub max_attempts: usize,
}

impl TestConfig {
    pub fn new(statistic: TestStatistic, replications: usize, salt: impl Into<String>) -> Self {
        Self {
            statistic,
            replications,
            salt: salt.into(),
            exposure: ExposureMeasure::Fraction,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Order statistics of the finite part of the null sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSummary {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
    pub mean: f64,
}

impl NullSummary {
    fn from_sample(null: &[f64]) -> Self {
        let mut finite: Vec<f64> = null.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if finite.is_empty() {
                return f64::NAN;
            }
            let idx = ((p * finite.len() as f64).ceil() as usize).clamp(1, finite.len()) - 1;
            finite[idx]
        };
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        Self {
            min: q(0.0),
            q05: q(0.05),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
            max: finite.last().copied().unwrap_or(f64::NAN),
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TestMetadata {
    pub test: String,
    pub design: String,
    pub statistic: String,
    pub salt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub stat_obs: f64,
    pub p_value: f64,
    pub replications: usize,
    /// Null replications where the statistic was undefined (counted as −∞).
    pub degenerate: usize,
    pub null_quantiles: NullSummary,
    pub metadata: TestMetadata,
}

/// p-values over a `(τ, ρ)` grid; `p[i][j]` belongs to `(tau_grid[i], rho_grid[j])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceRegion {
    pub tau_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub alpha: f64,
    pub accepted: Vec<Vec<bool>>,
    pub replications: usize,
    pub statistic: String,
}

impl AcceptanceRegion {
    /// `tau,rho,p,accepted` rows, τ-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,rho,p,accepted\n");
        for (i, tau) in self.tau_grid.iter().enumerate() {
            for (j, rho) in self.rho_grid.iter().enumerate() {
                out.push_str(&format!("{tau},{rho},{},{}\n", self.p[i][j], self.accepted[i][j]));
            }
        }
        out
    }

    pub fn is_accepted(&self, tau: f64, rho: f64) -> Option<bool> {
        let i = self.tau_grid.iter().position(|&t| t == tau)?;
        let j = self.rho_grid.iter().position(|&r| r == rho)?;
        Some(self.accepted[i][j])
    }
}

/// `|ρ̂|` from least squares of `y_resid` on `(1, z, t)`.
pub fn score_statistic_rho(y_resid: &[f64], z: &[u8], t: &[f64]) -> Result<f64, InferenceError> {
    if z.len() != y_resid.len() || t.len() != y_resid.len() {
        return Err(InferenceError::SizeMismatch { what: "z or t", expected: y_resid.len(), got: z.len().min(t.len()) });
    }
    TestStatistic::Score { sides: Sides::TwoSided }.evaluate(y_resid, z, t).ok_or(InferenceError::DegenerateObserved)
}

/// Sharp null `Y_i(z) = Y_i(0) + τ₀ z_i`: no spillovers with a constant
/// direct effect τ₀.
pub fn test_sharp_null(
    y: &[f64],
    z: &[u8],
    design: &Design,
    graph: &Graph,
    tau0: f64,
    config: &TestConfig,
) -> Result<TestResult, InferenceError> {
    check_inputs(y, z, graph, config)?;
    let resid: Vec<f64> = y.iter().zip(z).map(|(v, &zi)| v - tau0 * f64::from(zi)).collect();
    let prepared = design.prepare(graph)?;
    let mut out = run(&[resid], z, &prepared, graph, config, None)?;
    let mut result = out.pop().expect("one residual vector").into_result(config);
    result.metadata = metadata("sharp_null", design, config);
    result.metadata.tau0 = Some(tau0);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeResult {
    #[serde(flatten)]
    pub result: TestResult,
    pub argmax_tau: f64,
    /// Sharp-null p-value at each grid point.
    pub p_by_tau: Vec<(f64, f64)>,
}

/// Composite null of no spillovers for any τ in `tau_grid`: the p-value is the
/// supremum of sharp-null p-values. All grid points share the same draws.
pub fn test_composite_no_spillovers(
    y: &[f64],
    z: &[u8],
    design: &Design,
    graph: &Graph,
    tau_grid: &[f64],
    config: &TestConfig,
) -> Result<CompositeResult, InferenceError> {
    check_inputs(y, z, graph, config)?;
    check_grid(tau_grid, "tau")?;
    let residuals: Vec<Vec<f64>> = tau_grid
        .iter()
        .map(|&tau| y.iter().zip(z).map(|(v, &zi)| v - tau * f64::from(zi)).collect())
        .collect();
    let prepared = design.prepare(graph)?;
    let cells = run(&residuals, z, &prepared, graph, config, None)?;
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.p_value > cells[best].p_value {
            best = i;
        }
    }
    let p_by_tau = tau_grid.iter().copied().zip(cells.iter().map(|c| c.p_value)).collect();
    let argmax_tau = tau_grid[best];
    let mut result = cells.into_iter().nth(best).expect("nonempty").into_result(config);
    result.metadata = metadata("composite_no_spillovers", design, config);
    result.metadata.tau0 = Some(argmax_tau);
    result.metadata.argmax_tau = Some(argmax_tau);
    Ok(CompositeResult { result, argmax_tau, p_by_tau })
}

/// Conditional test of no spillovers. Focal units keep their observed
/// treatments, the rest are re-drawn from the design conditional on that, and
/// the statistic uses focal units only. No constant-effect assumption is
/// needed because focal outcomes are fixed under the null.
pub fn conditional_test_no_spillovers(
    y: &[f64],
    z: &[u8],
    design: &Design,
    graph: &Graph,
    focal: &FocalSet,
    config: &TestConfig,
) -> Result<TestResult, InferenceError> {
    check_inputs(y, z, graph, config)?;
    let n = graph.node_count();
    // Re-validate: a FocalSet may have been built for a different graph.
    let focal = FocalSet::new(focal.nodes().to_vec(), n)?;
    let prepared = design.prepare(graph)?;
    let mut out = run(&[y.to_vec()], z, &prepared, graph, config, Some(&focal))?;
    let mut result = out.pop().expect("one residual vector").into_result(config);
    result.metadata = metadata("conditional_no_spillovers", design, config);
    result.metadata.focal_count = Some(focal.len());
    Ok(result)
}

/// Inverts sharp-null tests of `Y_i(z) = Y_i(0) + τ z_i + ρ T_i(z)` over a
/// grid. Every cell shares the same `R` draws.
#[allow(clippy::too_many_arguments)]
pub fn acceptance_region(
    y: &[f64],
    z: &[u8],
    design: &Design,
    graph: &Graph,
    tau_grid: &[f64],
    rho_grid: &[f64],
    alpha: f64,
    config: &TestConfig,
) -> Result<AcceptanceRegion, InferenceError> {
    check_inputs(y, z, graph, config)?;
    check_grid(tau_grid, "tau")?;
    check_grid(rho_grid, "rho")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    let mut t_obs = vec![0.0; y.len()];
    config.exposure.compute_into(graph, z, &mut t_obs);
    let mut residuals = Vec::with_capacity(tau_grid.len() * rho_grid.len());
    for &tau in tau_grid {
        for &rho in rho_grid {
            residuals.push((0..y.len()).map(|i| y[i] - tau * f64::from(z[i]) - rho * t_obs[i]).collect());
        }
    }
    let prepared = design.prepare(graph)?;
    let cells = run(&residuals, z, &prepared, graph, config, None)?;
    let p: Vec<Vec<f64>> = cells.chunks(rho_grid.len()).map(|row| row.iter().map(|c| c.p_value).collect()).collect();
    let accepted = p.iter().map(|row| row.iter().map(|&v| v > alpha).collect()).collect();
    Ok(AcceptanceRegion {
        tau_grid: tau_grid.to_vec(),
        rho_grid: rho_grid.to_vec(),
        p,
        alpha,
        accepted,
        replications: config.replications,
        statistic: config.statistic.to_string(),
    })
}

/// Sharp null of constant direct effect τ₀ and social influence θ₀ on the
/// fraction of adopting peers, with adoption `d` held at its observed values
/// under re-randomization of `z`.
#[allow(clippy::too_many_arguments)]
pub fn test_influence_sharp_null(
    y: &[f64],
    z: &[u8],
    d: &[f64],
    design: &Design,
    graph: &Graph,
    tau0: f64,
    theta0: f64,
    config: &TestConfig,
) -> Result<TestResult, InferenceError> {
    check_inputs(y, z, graph, config)?;
    check_vector(d, graph, "d")?;
    let mut peer_d = vec![0.0; d.len()];
    graph.peer_mean(d, &mut peer_d);
    let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - tau0 * f64::from(z[i]) - theta0 * peer_d[i]).collect();
    let prepared = design.prepare(graph)?;
    let mut out = run(&[resid], z, &prepared, graph, config, None)?;
    let mut result = out.pop().expect("one residual vector").into_result(config);
    result.metadata = metadata("influence_sharp_null", design, config);
    result.metadata.tau0 = Some(tau0);
    result.metadata.theta0 = Some(theta0);
    Ok(result)
}

/// A deliberately invalid baseline: permutes `z` (keeping the number treated)
/// and tests with τ₀ = 0, i.e. it assumes no direct effects and ignores the
/// actual design. Equals [`test_sharp_null`] with τ₀ = 0 under
/// `CompleteRandomization` with the observed number of treated units.
pub fn naive_permutation_test(
    y: &[f64],
    z: &[u8],
    graph: &Graph,
    config: &TestConfig,
) -> Result<TestResult, InferenceError> {
    check_inputs(y, z, graph, config)?;
    let design = Design::CompleteRandomization { n1: z.iter().filter(|&&v| v == 1).count() };
    let mut result = test_sharp_null(y, z, &design, graph, 0.0, config)?;
    result.metadata.test = "naive_permutation".into();
    Ok(result)
}

fn metadata(test: &str, design: &Design, config: &TestConfig) -> TestMetadata {
    TestMetadata {
        test: test.into(),
        design: design.description(),
        statistic: config.statistic.to_string(),
        salt: config.salt.clone(),
        ..TestMetadata::default()
    }
}

fn check_vector(v: &[f64], graph: &Graph, what: &'static str) -> Result<(), InferenceError> {
    if v.len() != graph.node_count() {
        return Err(InferenceError::SizeMismatch { what, expected: graph.node_count(), got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(InferenceError::NonFinite(what));
    }
    Ok(())
}

fn check_inputs(y: &[f64], z: &[u8], graph: &Graph, config: &TestConfig) -> Result<(), InferenceError> {
    if config.replications == 0 {
        return Err(InferenceError::NoReplications);
    }
    check_vector(y, graph, "y")?;
    if z.len() != graph.node_count() {
        return Err(InferenceError::SizeMismatch { what: "z", expected: graph.node_count(), got: z.len() });
    }
    if z.iter().any(|&v| v > 1) {
        return Err(InferenceError::NonBinaryTreatment);
    }
    Ok(())
}

fn check_grid(grid: &[f64], name: &'static str) -> Result<(), InferenceError> {
    if grid.is_empty() {
        return Err(InferenceError::EmptyGrid(name));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::NonFinite(name));
    }
    Ok(())
}

/// Outcome of one residual vector against the shared null draws.
struct Cell {
    stat_obs: f64,
    p_value: f64,
    degenerate: usize,
    null: Vec<f64>,
}

impl Cell {
    fn into_result(self, config: &TestConfig) -> TestResult {
        TestResult {
            stat_obs: self.stat_obs,
            p_value: self.p_value,
            replications: config.replications,
            degenerate: self.degenerate,
            null_quantiles: NullSummary::from_sample(&self.null),
            metadata: TestMetadata::default(),
        }
    }
}

struct Scratch {
    z: Vec<u8>,
    t: Vec<f64>,
    y_sub: Vec<f64>,
    z_sub: Vec<u8>,
    t_sub: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { z: vec![0; n], t: vec![0.0; n], y_sub: Vec::new(), z_sub: Vec::new(), t_sub: Vec::new() }
    }

    /// Statistic of `resid` against the treatment and exposure currently held
    /// in `self.z` / `self.t`, restricted to `focal` when given.
    fn evaluate(&mut self, statistic: TestStatistic, resid: &[f64], focal: Option<&FocalSet>) -> f64 {
        let value = match focal {
            None => statistic.evaluate(resid, &self.z, &self.t),
            Some(f) => {
                self.y_sub.clear();
                self.z_sub.clear();
                self.t_sub.clear();
                for &i in f.nodes() {
                    self.y_sub.push(resid[i]);
                    self.z_sub.push(self.z[i]);
                    self.t_sub.push(self.t[i]);
                }
                statistic.evaluate(&self.y_sub, &self.z_sub, &self.t_sub)
            }
        };
        value.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Runs the shared Monte Carlo loop for a batch of residual vectors.
fn run(
    residuals: &[Vec<f64>],
    z_obs: &[u8],
    prepared: &PreparedDesign<'_>,
    graph: &Graph,
    config: &TestConfig,
    focal: Option<&FocalSet>,
) -> Result<Vec<Cell>, InferenceError> {
    let n = graph.node_count();
    let statistic = config.statistic;

    let mut obs = Scratch::new(n);
    obs.z.copy_from_slice(z_obs);
    config.exposure.compute_into(graph, z_obs, &mut obs.t);
    let stat_obs: Vec<f64> = residuals.iter().map(|r| obs.evaluate(statistic, r, focal)).collect();
    if stat_obs.contains(&f64::NEG_INFINITY) {
        return Err(InferenceError::DegenerateObserved);
    }

    let mask = match focal {
        Some(f) => {
            let fixed: Vec<(usize, u8)> = f.nodes().iter().map(|&i| (i, z_obs[i])).collect();
            Some(prepared.constraint_mask(&fixed)?)
        }
        None => None,
    };

    let rows: Vec<Vec<f64>> = (1..=config.replications)
        .into_par_iter()
        .map_init(
            || Scratch::new(n),
            |s, r| -> Result<Vec<f64>, InferenceError> {
                let salt = format!("{}#{r}", config.salt);
                match &mask {
                    Some(m) => prepared.conditional_into(&salt, m, config.max_attempts, &mut s.z)?,
                    None => prepared.draw_subjects_into(&salt, &mut s.z)?,
                }
                config.exposure.compute_into(graph, &s.z, &mut s.t);
                Ok(residuals.iter().map(|resid| s.evaluate(statistic, resid, focal)).collect())
            },
        )
        .collect::<Result<_, _>>()?;

    let reps = config.replications;
    let mut cells = Vec::with_capacity(residuals.len());
    for (k, &obs_k) in stat_obs.iter().enumerate() {
        let null: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        let degenerate = null.iter().filter(|&&v| v == f64::NEG_INFINITY).count();
        if 2 * degenerate > reps {
            return Err(InferenceError::TooManyDegenerate { degenerate, replications: reps });
        }
        let extreme = null.iter().filter(|&&v| v >= obs_k).count();
        cells.push(Cell {
            stat_obs: obs_k,
            p_value: (1 + extreme) as f64 / (reps + 1) as f64,
            degenerate,
            null,
        });
    }
    Ok(cells)
}
