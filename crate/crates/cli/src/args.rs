use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spillover_core::inference::TestStatistic;
use spillover_core::sim::EffectParam;

/// Design and analyze randomized experiments on networks.
///
/// Every command prints a JSON envelope `{command, config_hash, results}` on
/// stdout. Files written with `--out` start with `#` lines recording the
/// config hash and the salt/seed used. Paths and `--threads` are not part of
/// the config hash; input file contents are.
#[derive(Debug, Parser, Serialize)]
#[command(name = "spillover", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long = "R", global = true, value_name = "R")]
    pub replications: Option<usize>,
    /// Significance level.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Salt (experiment name) that all hash-based randomness derives from.
    #[arg(long, global = true)]
    pub salt: Option<String>,
    /// Seed for graph generation, partitioning and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic graph as an edge list.
    GenGraph(GenGraphArgs),
    /// Partition a graph into exactly k clusters.
    Partition(PartitionArgs),
    /// Assign treatments from a design or a DSL program.
    Assign(AssignArgs),
    /// Evaluate a DSL program over a table of units.
    DslRun(DslRunArgs),
    /// Exposure for an assignment, or its distribution under a design.
    Expose(ExposeArgs),
    /// Randomization test for spillovers or influence.
    Test(TestArgs),
    /// Acceptance region over a (tau, rho) grid.
    Region(RegionArgs),
    /// Simulate a dataset with known effects.
    Simulate(SimulateArgs),
    /// Rejection rate (or power curve) of a test on simulated data.
    Calibrate(CalibrateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenGraph(_) => "gen-graph",
            Command::Partition(_) => "partition",
            Command::Assign(_) => "assign",
            Command::DslRun(_) => "dsl-run",
            Command::Expose(_) => "expose",
            Command::Test(_) => "test",
            Command::Region(_) => "region",
            Command::Simulate(_) => "simulate",
            Command::Calibrate(_) => "calibrate",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    /// Erdős–Rényi with --n and --p.
    Er,
    /// Disjoint cliques with --groups and --size.
    Cliques,
}

#[derive(Debug, Args, Serialize)]
pub struct GenGraphArgs {
    #[arg(long, value_enum)]
    pub kind: GraphKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PartitionArgs {
    /// Edge list CSV (`src,dst[,w]`).
    #[arg(long)]
    #[serde(skip)]
    pub graph: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Cluster CSV (`node,label`).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Graph plus the design it was randomized under.
#[derive(Debug, Args, Serialize)]
pub struct DesignInput {
    /// Edge list CSV (`src,dst[,w]`).
    #[arg(long)]
    #[serde(skip)]
    pub graph: PathBuf,
    /// Design JSON, e.g. {"type":"iid_bernoulli","p":0.5}.
    #[arg(long)]
    #[serde(skip)]
    pub design: Option<PathBuf>,
    /// Cluster CSV supplying `clusters` for cluster_bernoulli/two_stage_uniform.
    #[arg(long)]
    #[serde(skip)]
    pub clusters: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AssignArgs {
    #[command(flatten)]
    pub input: DesignInput,
    /// DSL program; every unit it names is bound to the node id.
    #[arg(long, conflicts_with = "design")]
    #[serde(skip)]
    pub program: Option<PathBuf>,
    /// Program variable holding the treatment (default: the last assigned).
    #[arg(long, requires = "program")]
    pub variable: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DslRunArgs {
    #[arg(long)]
    #[serde(skip)]
    pub program: PathBuf,
    /// Experiment name used in per-variable salts (default: --salt).
    #[arg(long)]
    pub experiment: Option<String>,
    /// CSV whose columns bind unit names.
    #[arg(long)]
    #[serde(skip)]
    pub units: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExposeArgs {
    #[command(flatten)]
    pub input: DesignInput,
    /// Realized assignment; writes `node,t` instead of a distribution.
    #[arg(long, conflicts_with = "design")]
    #[serde(skip)]
    pub z: Option<PathBuf>,
    /// Baseline design for a variance-ratio (overdispersion) report.
    #[arg(long, requires = "design")]
    #[serde(skip)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TestKindArg {
    /// Sharp null of no spillovers given tau0 (or a --tau-grid).
    Sharp,
    /// Conditional test on focal units, robust to heterogeneous direct effects.
    Conditional,
    /// Sharp null of constant direct effect tau0 and influence theta0.
    Influence,
    /// Permutation test that ignores direct effects (invalid; for comparison).
    Naive,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FocalArg {
    Random,
    IndependentSet,
}

/// Observed data for a test.
#[derive(Debug, Args, Serialize)]
pub struct Observed {
    /// CSV with a `y` column (a dataset CSV works).
    #[arg(long)]
    #[serde(skip)]
    pub y: PathBuf,
    /// Assignment CSV (`unit,z`; a dataset CSV works).
    #[arg(long)]
    #[serde(skip)]
    pub z: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: DesignInput,
    #[command(flatten)]
    pub observed: Observed,
    #[arg(long, value_enum, default_value = "sharp")]
    pub kind: TestKindArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau0: f64,
    /// Composite null: comma list or start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    pub tau_grid: Option<String>,
    /// With --tau-grid, compute an acceptance region instead.
    #[arg(long, requires = "tau_grid", allow_hyphen_values = true)]
    pub rho_grid: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta0: f64,
    /// Behaviour CSV with a `d` column (influence test).
    #[arg(long)]
    #[serde(skip)]
    pub d: Option<PathBuf>,
    /// Focal-unit CSV with a `node` column (conditional test).
    #[arg(long)]
    #[serde(skip)]
    pub focal: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub focal_fraction: f64,
    #[arg(long, value_enum, default_value = "independent-set")]
    pub focal_strategy: FocalArg,
    /// score, slope or F, optionally suffixed _greater/_less.
    #[arg(long)]
    pub stat: Option<TestStatistic>,
    /// Region CSV (`tau,rho,p,accepted`) when --rho-grid is given.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RegionArgs {
    #[command(flatten)]
    pub input: DesignInput,
    #[command(flatten)]
    pub observed: Observed,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_grid: String,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_grid: String,
    #[arg(long)]
    pub stat: Option<TestStatistic>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulation spec JSON: {graph, design, params, model}.
    #[arg(long)]
    #[serde(skip)]
    pub spec: PathBuf,
    /// Use this edge list instead of generating the spec's graph.
    #[arg(long)]
    #[serde(skip)]
    pub graph: Option<PathBuf>,
    /// Dataset CSV (`node,z,d,y`).
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Also write the graph used.
    #[arg(long)]
    #[serde(skip)]
    pub graph_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Test spec JSON, e.g. {"test":"sharp_null","tau0":1,"statistic":"score"}.
    #[arg(long)]
    #[serde(skip)]
    pub test: PathBuf,
    /// Simulation spec JSON, as for `simulate`.
    #[arg(long)]
    #[serde(skip)]
    pub spec: PathBuf,
    /// Number of simulated datasets (at least 100).
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    /// Sweep this simulation parameter over --grid for a power curve.
    #[arg(long, value_enum, requires = "grid")]
    pub param: Option<EffectArg>,
    /// Effect values: comma list or start:stop:step.
    #[arg(long, requires = "param", allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Long-format CSV of the power curve.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum EffectArg {
    Tau,
    Rho,
    Theta,
    Beta,
}

impl From<EffectArg> for EffectParam {
    fn from(e: EffectArg) -> Self {
        match e {
            EffectArg::Tau => EffectParam::Tau,
            EffectArg::Rho => EffectParam::Rho,
            EffectArg::Theta => EffectParam::Theta,
            EffectArg::Beta => EffectParam::Beta,
        }
    }
}
