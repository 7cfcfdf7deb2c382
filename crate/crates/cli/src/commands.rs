use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use spillover_core::design::{Assignment, Design};
use spillover_core::dsl;
use spillover_core::exposure::{exposure_distribution, overdispersion_check};
use spillover_core::graph::{generate_disjoint_cliques, generate_random_graph, write_edge_list, Graph};
use spillover_core::inference::{
    acceptance_region, conditional_test_no_spillovers, naive_permutation_test, select_focal_units,
    test_composite_no_spillovers, test_influence_sharp_null, test_sharp_null, FocalSet, FocalStrategy, TestConfig,
    TestStatistic,
};
use spillover_core::io::{self, Table};
use spillover_core::partition::{cut_fraction, partition};
use spillover_core::sim::{self, calibrate_on_graph, power_curve, SimSpec, TestSpec};

use crate::args::*;
use crate::context::{data, in_file, parse_grid, usage, CliError, Context};

const DEFAULT_REPLICATIONS: usize = 1000;
const DEFAULT_ALPHA: f64 = 0.05;

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn require_salt(global: &Global, ctx: &mut Context) -> Result<String, CliError> {
    let salt = global.salt.clone().ok_or_else(|| usage("--salt is required"))?;
    if salt.is_empty() {
        return Err(usage("--salt must be nonempty"));
    }
    ctx.record_salt(&salt);
    Ok(salt)
}

fn require_design(input: &DesignInput, ctx: &mut Context, graph: &Graph) -> Result<Design, CliError> {
    let path = input.design.as_deref().ok_or_else(|| usage("--design is required"))?;
    ctx.load_design(path, input.clusters.as_deref(), graph, true)
}

fn alpha(global: &Global) -> Result<f64, CliError> {
    let a = global.alpha.unwrap_or(DEFAULT_ALPHA);
    if !(a > 0.0 && a < 1.0) {
        return Err(usage(format!("--alpha {a} outside (0,1)")));
    }
    Ok(a)
}

pub fn gen_graph(global: &Global, args: &GenGraphArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let graph = match args.kind {
        GraphKind::Er => {
            let (Some(n), Some(p)) = (args.n, args.p) else { return Err(usage("--kind er needs --n and --p")) };
            let seed = global.seed.unwrap_or(0);
            ctx.record_seed(seed);
            generate_random_graph(n, p, seed).map_err(|e| usage(e.to_string()))?
        }
        GraphKind::Cliques => {
            let (Some(g), Some(m)) = (args.groups, args.size) else {
                return Err(usage("--kind cliques needs --groups and --size"));
            };
            generate_disjoint_cliques(g, m).map_err(|e| usage(e.to_string()))?
        }
    };
    ctx.write(&args.out, &write_edge_list(&graph))?;
    Ok(json!({ "n": graph.node_count(), "edges": graph.edge_count(), "directed": graph.is_directed() }))
}

pub fn partition_cmd(global: &Global, args: &PartitionArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let graph = ctx.load_graph(&args.graph)?;
    let seed = global.seed.unwrap_or(0);
    ctx.record_seed(seed);
    let clusters = partition(&graph, args.k, seed).map_err(data)?;
    let cut = cut_fraction(&graph, &clusters).map_err(data)?;
    let sizes: Vec<usize> = clusters.members().iter().map(Vec::len).collect();
    if let Some(out) = &args.out {
        ctx.write(out, &io::write_clusters(&clusters, &[]))?;
    }
    Ok(json!({ "k": clusters.k(), "cut_fraction": cut, "cluster_sizes": sizes }))
}

pub fn assign(global: &Global, args: &AssignArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let graph = ctx.load_graph(&args.input.graph)?;
    let salt = require_salt(global, ctx)?;
    if let Some(program_path) = &args.program {
        if args.input.clusters.is_some() {
            return Err(usage("--clusters applies to --design, not --program"));
        }
        let source = ctx.read(program_path)?;
        let program = dsl::parse(&source).map_err(|e| CliError::Data(format!("{}: {e}", program_path.display())))?;
        let variable = match &args.variable {
            Some(v) if program.variables().contains(&v.as_str()) => v.clone(),
            Some(v) => return Err(usage(format!("program does not assign {v:?}"))),
            None => program.variables().last().map(|v| v.to_string()).ok_or_else(|| usage("empty program"))?,
        };
        let unit_names: Vec<String> = program.units().iter().map(|u| u.to_string()).collect();
        let mut z = Vec::with_capacity(graph.node_count());
        for node in 0..graph.node_count() {
            let units: HashMap<String, String> = unit_names.iter().map(|u| (u.clone(), node.to_string())).collect();
            let value = dsl::evaluate(&program, &salt, &units).map_err(data)?.get(&variable).expect("assigned");
            z.push(match value {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                v => return Err(data(format!("{variable} = {v} for node {node}; treatment must be 0 or 1"))),
            });
        }
        ctx.write(&args.out, &io::write_assignment(&z, &[]))?;
        let treated = z.iter().filter(|&&v| v == 1).count();
        return Ok(json!({ "program_variable": variable, "salt": salt, "units": z.len(), "treated": treated }));
    }
    let design = require_design(&args.input, ctx, &graph)?;
    let drawn = design.prepare(&graph).map_err(data)?.draw(&salt).map_err(data)?;
    let (units, treated) = match &drawn {
        Assignment::Subjects(z) => {
            ctx.write(&args.out, &io::write_assignment(z.as_slice(), &[]))?;
            (z.len(), z.treated())
        }
        Assignment::Edges(w) => {
            ctx.write(&args.out, &io::write_edge_assignment(w, &[]))?;
            (w.values().len(), w.values().iter().filter(|&&v| v == 1).count())
        }
    };
    Ok(json!({ "design": design.description(), "salt": salt, "units": units, "treated": treated }))
}

pub fn dsl_run(global: &Global, args: &DslRunArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let source = ctx.read(&args.program)?;
    let program = dsl::parse(&source).map_err(|e| CliError::Data(format!("{}: {e}", args.program.display())))?;
    let experiment = match (&args.experiment, &global.salt) {
        (Some(e), _) | (None, Some(e)) if !e.is_empty() => e.clone(),
        _ => return Err(usage("--experiment (or --salt) is required")),
    };
    ctx.record_salt(&experiment);
    let units_text = ctx.read(&args.units)?;
    let table = Table::parse(&units_text).map_err(in_file(&args.units))?;
    let variables: Vec<&str> = program.variables();
    let mut out = String::new();
    let header: Vec<&str> = table.headers.iter().map(String::as_str).chain(variables.iter().copied()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (line, row) in &table.rows {
        let units: HashMap<String, String> = table.headers.iter().cloned().zip(row.iter().cloned()).collect();
        let eval = dsl::evaluate(&program, &experiment, &units)
            .map_err(|e| CliError::Data(format!("{}: line {line}: {e}", args.units.display())))?;
        out.push_str(&row.join(","));
        for v in &variables {
            let _ = write!(out, ",{}", eval.get(v).expect("assigned"));
        }
        out.push('\n');
    }
    ctx.write(&args.out, &out)?;
    Ok(json!({ "experiment": experiment, "rows": table.rows.len(), "variables": variables }))
}

pub fn expose(global: &Global, args: &ExposeArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let graph = ctx.load_graph(&args.input.graph)?;
    let n = graph.node_count();
    if let Some(zpath) = &args.z {
        let z = io::read_assignment(&ctx.read(zpath)?, n).map_err(in_file(zpath))?;
        let mut t = vec![0.0; n];
        graph.peer_mean_binary(&z, &mut t);
        if let Some(out) = &args.out {
            let mut body = String::from("node,t\n");
            for (i, v) in t.iter().enumerate() {
                let _ = writeln!(body, "{i},{v}");
            }
            ctx.write(out, &body)?;
        }
        let mean = if n == 0 { 0.0 } else { t.iter().sum::<f64>() / n as f64 };
        return Ok(json!({ "n": n, "mean_exposure": mean }));
    }
    let design = require_design(&args.input, ctx, &graph)?;
    let baseline = match &args.baseline {
        Some(p) => Some(ctx.load_design(p, args.input.clusters.as_deref(), &graph, false)?),
        None => None,
    };
    let salt = require_salt(global, ctx)?;
    let r = global.replications.unwrap_or(DEFAULT_REPLICATIONS);
    let dist = exposure_distribution(&design, &graph, r, &salt).map_err(data)?;
    if let Some(out) = &args.out {
        let mut body = String::from("node,mean,var,p0,p1\n");
        for (i, node) in dist.nodes.iter().enumerate() {
            let _ = writeln!(body, "{i},{},{},{},{}", node.mean, node.variance, node.p0, node.p1);
        }
        ctx.write(out, &body)?;
    }
    let avg = |f: &dyn Fn(&spillover_core::exposure::NodeExposure) -> f64| {
        if n == 0 {
            0.0
        } else {
            dist.nodes.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut results = json!({
        "design": design.description(),
        "replications": r,
        "mean_exposure": avg(&|x| x.mean),
        "mean_variance": avg(&|x| x.variance),
        "mean_p0": avg(&|x| x.p0),
        "mean_p1": avg(&|x| x.p1),
    });
    if let Some(base) = baseline {
        let report = overdispersion_check(&design, &base, &graph, r, &salt).map_err(data)?;
        results["baseline"] = json!(base.description());
        results["mean_variance_ratio"] = json!(report.mean_ratio);
    }
    Ok(results)
}

struct Loaded {
    graph: Graph,
    design: Option<Design>,
    y: Vec<f64>,
    z: Vec<u8>,
}

fn load_observed(input: &DesignInput, obs: &Observed, need_design: bool, ctx: &mut Context) -> Result<Loaded, CliError> {
    let graph = ctx.load_graph(&input.graph)?;
    let n = graph.node_count();
    let design = if need_design { Some(require_design(input, ctx, &graph)?) } else { None };
    let y = io::read_node_values(&ctx.read(&obs.y)?, "y", n).map_err(in_file(&obs.y))?;
    let z = io::read_assignment(&ctx.read(&obs.z)?, n).map_err(in_file(&obs.z))?;
    Ok(Loaded { graph, design, y, z })
}

fn test_config(global: &Global, stat: Option<TestStatistic>, default: TestStatistic, salt: String) -> TestConfig {
    TestConfig::new(stat.unwrap_or(default), global.replications.unwrap_or(DEFAULT_REPLICATIONS), salt)
}

fn region_output(
    global: &Global,
    loaded: &Loaded,
    tau: &[f64],
    rho: &[f64],
    config: &TestConfig,
    out: Option<&Path>,
    ctx: &Context,
) -> Result<Value, CliError> {
    let design = loaded.design.as_ref().expect("loaded with design");
    let region = acceptance_region(&loaded.y, &loaded.z, design, &loaded.graph, tau, rho, alpha(global)?, config)
        .map_err(data)?;
    if let Some(out) = out {
        ctx.write(out, &region.to_csv())?;
    }
    Ok(to_value(&region))
}

pub fn test(global: &Global, args: &TestArgs, ctx: &mut Context) -> Result<Value, CliError> {
    // usage problems are reported before any file is touched
    let tau_grid = args.tau_grid.as_deref().map(parse_grid).transpose()?;
    let rho_grid = args.rho_grid.as_deref().map(parse_grid).transpose()?;
    if rho_grid.is_some() && args.kind != TestKindArg::Sharp {
        return Err(usage("--rho-grid only applies to --kind sharp"));
    }
    if tau_grid.is_some() && args.kind != TestKindArg::Sharp {
        return Err(usage("--tau-grid only applies to --kind sharp"));
    }
    if args.out.is_some() && rho_grid.is_none() {
        return Err(usage("--out is only written for acceptance regions (--rho-grid)"));
    }
    let need_design = args.kind != TestKindArg::Naive;
    let loaded = load_observed(&args.input, &args.observed, need_design, ctx)?;
    let n = loaded.graph.node_count();
    let d = match (&args.d, args.kind) {
        (Some(p), TestKindArg::Influence) => Some(io::read_node_values(&ctx.read(p)?, "d", n).map_err(in_file(p))?),
        (None, TestKindArg::Influence) => return Err(usage("--kind influence needs --d")),
        (Some(_), _) => return Err(usage("--d only applies to --kind influence")),
        (None, _) => None,
    };
    let focal_file = match (&args.focal, args.kind) {
        (Some(p), TestKindArg::Conditional) => {
            let table = Table::parse(&ctx.read(p)?).map_err(in_file(p))?;
            Some(table.column("node", |s| s.parse::<usize>().ok()).map_err(in_file(p))?)
        }
        (Some(_), _) => return Err(usage("--focal only applies to --kind conditional")),
        (None, _) => None,
    };
    let salt = require_salt(global, ctx)?;
    if let Some(rho) = &rho_grid {
        let config = test_config(global, args.stat, TestStatistic::F, salt);
        let tau = tau_grid.as_deref().expect("clap requires tau_grid");
        return region_output(global, &loaded, tau, rho, &config, args.out.as_deref(), ctx);
    }
    let config = test_config(global, args.stat, TestStatistic::default(), salt.clone());
    let (y, z, g) = (&loaded.y, &loaded.z, &loaded.graph);
    let design = loaded.design.as_ref();
    let result = match args.kind {
        TestKindArg::Sharp => match &tau_grid {
            Some(grid) => {
                to_value(test_composite_no_spillovers(y, z, design.unwrap(), g, grid, &config).map_err(data)?)
            }
            None => to_value(test_sharp_null(y, z, design.unwrap(), g, args.tau0, &config).map_err(data)?),
        },
        TestKindArg::Naive => to_value(naive_permutation_test(y, z, g, &config).map_err(data)?),
        TestKindArg::Influence => to_value(
            test_influence_sharp_null(y, z, d.as_deref().unwrap(), design.unwrap(), g, args.tau0, args.theta0, &config)
                .map_err(data)?,
        ),
        TestKindArg::Conditional => {
            let (focal, selection) = match focal_file {
                Some(nodes) => (FocalSet::new(nodes, n).map_err(data)?, Value::Null),
                None => {
                    let strategy = match args.focal_strategy {
                        FocalArg::Random => FocalStrategy::Random,
                        FocalArg::IndependentSet => FocalStrategy::IndependentSet,
                    };
                    let sel = select_focal_units(g, args.focal_fraction, &strategy, &format!("{salt}.focal"))
                        .map_err(|e| usage(e.to_string()))?;
                    let info = json!({ "budget": sel.budget, "budget_met": sel.budget_met });
                    (sel.focal, info)
                }
            };
            let mut v = to_value(conditional_test_no_spillovers(y, z, design.unwrap(), g, &focal, &config).map_err(data)?);
            v["focal_selection"] = selection;
            v
        }
    };
    Ok(result)
}

pub fn region(global: &Global, args: &RegionArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let (tau, rho) = (parse_grid(&args.tau_grid)?, parse_grid(&args.rho_grid)?);
    let loaded = load_observed(&args.input, &args.observed, true, ctx)?;
    let salt = require_salt(global, ctx)?;
    let config = test_config(global, args.stat, TestStatistic::F, salt);
    region_output(global, &loaded, &tau, &rho, &config, args.out.as_deref(), ctx)
}

fn load_json<T: serde::de::DeserializeOwned>(ctx: &mut Context, path: &Path) -> Result<T, CliError> {
    let text = ctx.read(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_sim_spec(global: &Global, ctx: &mut Context, path: &Path) -> Result<SimSpec, CliError> {
    let mut spec: SimSpec = load_json(ctx, path)?;
    if let Some(seed) = global.seed {
        spec.params.seed = seed;
    }
    ctx.record_seed(spec.params.seed);
    Ok(spec)
}

pub fn simulate(global: &Global, args: &SimulateArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let spec = load_sim_spec(global, ctx, &args.spec)?;
    let graph = match &args.graph {
        Some(p) => ctx.load_graph(p)?,
        None => spec.graph.build(spec.params.seed).map_err(data)?,
    };
    let salt = require_salt(global, ctx)?;
    let dataset = sim::simulate_dataset(&graph, &spec.design, &spec.params, spec.model, &salt).map_err(data)?;
    ctx.write(&args.out, &io::write_dataset(&dataset, &[]))?;
    if let Some(gout) = &args.graph_out {
        ctx.write(gout, &write_edge_list(&graph))?;
    }
    let n = dataset.z.len();
    let mean = |v: &mut dyn Iterator<Item = f64>| if n == 0 { 0.0 } else { v.sum::<f64>() / n as f64 };
    Ok(json!({
        "n": n,
        "edges": graph.edge_count(),
        "treated": dataset.z.iter().filter(|&&v| v == 1).count(),
        "adopters": dataset.d.as_ref().map(|d| d.iter().filter(|&&v| v == 1).count()),
        "mean_y": mean(&mut dataset.y.iter().copied()),
    }))
}

pub fn calibrate(global: &Global, args: &CalibrateArgs, ctx: &mut Context) -> Result<Value, CliError> {
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;
    let alpha = alpha(global)?;
    if args.sims < sim::MIN_SIMS {
        return Err(usage(format!("--sims must be at least {}", sim::MIN_SIMS)));
    }
    if args.out.is_some() && grid.is_none() {
        return Err(usage("--out is only written for power curves (--param/--grid)"));
    }
    let mut test: TestSpec = load_json(ctx, &args.test)?;
    let spec = load_sim_spec(global, ctx, &args.spec)?;
    if let Some(r) = global.replications {
        test.replications = r;
    }
    match (&args.param, &grid) {
        (Some(param), Some(grid)) => {
            let curve = power_curve(&test, &spec, (*param).into(), grid, args.sims, alpha).map_err(data)?;
            if let Some(out) = &args.out {
                let mut body = String::from("effect,n_sims,rejections,rejection_rate,ci_low,ci_high,mean_p\n");
                for p in &curve {
                    let c = &p.calibration;
                    let _ = writeln!(
                        body,
                        "{},{},{},{},{},{},{}",
                        p.effect, c.n_sims, c.rejections, c.rejection_rate, c.ci_low, c.ci_high, c.mean_p
                    );
                }
                ctx.write(out, &body)?;
            }
            Ok(json!({ "test": test, "param": param, "curve": curve }))
        }
        _ => {
            let graph = spec.graph.build(spec.params.seed).map_err(data)?;
            let cal = calibrate_on_graph(&graph, &test, &spec, args.sims, alpha).map_err(data)?;
            Ok(json!({ "test": test, "calibration": cal }))
        }
    }
}
