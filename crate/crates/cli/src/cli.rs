//! The `vvc` command line: parsing, dispatch, and exit-code policy.
//!
//! Exit codes: 0 success (including domain verdicts like "diverged" that are
//! reported as data), 1 domain/data errors, 2 usage errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;
use vvc_core::design::DesignProblem;
use vvc_core::linmodels::{build_ldf, lpf_offset, lpf_predict, model_error_report, LinearPlant};
use vvc_core::network::{validate_radial, NetworkModel};
use vvc_core::powerflow::{solve_pf, PfConfig};
use vvc_core::scenario::{
    average_operating_point, select_exemplary_hours, select_worst_case, split_train_test,
    synthesize_year, Scenario, ScenarioSet,
};
use vvc_core::simloop::{simulate_closed_loop, LoopConfig, LoopMode};
use vvc_core::stability::{check_stability, criterion_value, Criterion, GainVector};

use crate::designfile::{self, parse_criterion};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::report;
use crate::scenarios::{self, HoursFile, PickFile};
use crate::tracefile::{self, RunSummary};
use crate::{feeder, modelfile, parallel};

#[derive(Debug, Parser)]
#[command(name = "vvc", version, about = "Offline design toolkit for decentralized Volt-VAr control on radial feeders")]
pub struct Cli {
    /// Seed for every randomized step of the invoked command.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for parallel sections (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Suppress log output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Power-flow convergence tolerance (p.u. power mismatch).
    #[arg(long = "pf-tol", global = true, default_value_t = 1e-10)]
    pub pf_tol: f64,
    /// Power-flow iteration cap.
    #[arg(long = "pf-max-iter", global = true, default_value_t = 100)]
    pub pf_max_iter: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the nonlinear power flow for one loading condition.
    Pf(PfArgs),
    /// Build the linearized power flow model around an operating point.
    Linearize(LinearizeArgs),
    /// Validate a feeder's topology and, optionally, a model file against it.
    ValidateModel(ValidateArgs),
    /// Evaluate a stability criterion for a design, or sample a feasibility
    /// region over two generators.
    Stability(StabilityArgs),
    /// Optimize per-inverter VVC slopes.
    Design(DesignArgs),
    /// Simulate the closed loop against the nonlinear power flow.
    Simulate(SimulateArgs),
    /// Scenario-set tools.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Plot-ready study outputs.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Args)]
pub struct PfArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// Scenario set the `--scenario` id resolves against.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// `zero`, `worst`, an id from `--scenarios`, or a single-scenario CSV path.
    #[arg(long, default_value = "zero")]
    pub scenario: String,
    /// Write voltages as CSV (`node_id,v_pu`) instead of just the JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LinearizeArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// Operating point produced by `vvc scenario opoint`.
    #[arg(long)]
    pub opoint: PathBuf,
    /// Centered-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// LPF model file (the default plant).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Needed with `--plant ldf` or when `--model` carries a fingerprint.
    #[arg(long)]
    pub feeder: PathBuf,
    /// `lpf` (default) or `ldf` (impedance-only sensitivity).
    #[arg(long, default_value = "lpf")]
    pub plant: String,
    /// Design file holding the slopes to check.
    #[arg(long)]
    pub k: Option<PathBuf>,
    #[arg(long, default_value = "rho")]
    pub criterion: String,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Sample the 2-D feasible region instead: CSV destination.
    #[arg(long)]
    pub region_out: Option<PathBuf>,
    /// Two generator node ids, comma separated.
    #[arg(long)]
    pub region_nodes: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub region_grid: usize,
    #[arg(long, default_value_t = -1.5)]
    pub region_kmin: f64,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// LPF model file; omit with `--plant ldf`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "lpf")]
    pub plant: String,
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Design loading condition: `worst` or a scenario id.
    #[arg(long, default_value = "worst")]
    pub scenario: String,
    #[arg(long, default_value = "rho")]
    pub criterion: String,
    #[arg(long, default_value_t = 0.06)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    /// Uniform reference voltage.
    #[arg(long, default_value_t = 1.0)]
    pub vref: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// `zero`, `worst`, an id from `--scenarios`, or a single-scenario CSV path.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value = "nonincremental")]
    pub mode: String,
    #[arg(long = "dt-over-tau", default_value_t = 1.0)]
    pub dt_over_tau: f64,
    /// Slope scaling applied before simulation (the x1.1 / x25 studies).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long = "conv-tol", default_value_t = 1e-4)]
    pub conv_tol: f64,
    #[arg(long = "max-steps", default_value_t = 2000)]
    pub max_steps: usize,
    #[arg(long = "divergence-limit", default_value_t = 0.5)]
    pub divergence_limit: f64,
    #[arg(long = "history-stride", default_value_t = 1)]
    pub history_stride: usize,
    #[arg(long, default_value_t = 1.0)]
    pub vref: f64,
    /// Trace CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON destination (always printed to stdout too).
    #[arg(long = "summary-out")]
    pub summary_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Generate a synthetic 8760-hour year.
    Synth {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random train/test split.
    Split {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        #[arg(long = "out-train")]
        out_train: PathBuf,
        #[arg(long = "out-test")]
        out_test: PathBuf,
    },
    /// Average operating point of a scenario set.
    Opoint {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Largest open-loop voltage deviation in a set.
    Worst {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The four exemplary hours (max demand, max generation, min/max voltage).
    Hours {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Model-vs-AC voltage errors: raw records and a pre-binned histogram.
    ModelError {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long = "out-records")]
        out_records: Option<PathBuf>,
        #[arg(long = "out-hist")]
        out_hist: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Deviation bars per exemplary hour for one or more control schemes.
    Bars {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        hours: PathBuf,
        /// Scheme spec `NAME=DESIGN.json[:scale=S][:mode=incremental][:dt=D]`, repeatable.
        #[arg(long = "design")]
        designs: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        vref: f64,
        #[arg(long = "conv-tol", default_value_t = 1e-4)]
        conv_tol: f64,
        #[arg(long = "max-steps", default_value_t = 20000)]
        max_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop voltage trace (alias of `simulate --out`).
    Trace(SimulateArgs),
    /// Node-depth voltage cloud across a scenario set and schemes.
    Cloud {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long = "design")]
        designs: Vec<String>,
        /// Cap on the number of scenarios (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
        #[arg(long, default_value_t = 1.0)]
        vref: f64,
        #[arg(long = "conv-tol", default_value_t = 1e-4)]
        conv_tol: f64,
        #[arg(long = "max-steps", default_value_t = 20000)]
        max_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

pub struct Ctx {
    pub pf: PfConfig,
    pub seed: u64,
    pub manifest: RunManifest,
}

impl Ctx {
    pub fn load_feeder(&mut self, path: &Path) -> Result<NetworkModel> {
        self.manifest.record_input(path);
        feeder::load_feeder(path)
    }

    pub fn load_scenarios(&mut self, path: &Path, net: &NetworkModel) -> Result<ScenarioSet> {
        self.manifest.record_input(path);
        scenarios::load_timeseries(path, net)
    }
}

/// Parse argv and execute; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout (exit 0) and usage errors on
            // stderr (exit 2)
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.quiet);
    if cli.threads > 0 {
        // ignore pool re-initialization when run() is invoked repeatedly
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let mut ctx = Ctx {
        pf: PfConfig {
            tolerance: cli.pf_tol,
            max_iter: cli.pf_max_iter,
            ..PfConfig::default()
        },
        seed: cli.seed,
        manifest: RunManifest::new(argv),
    };
    let outcome = dispatch(cli.command, &mut ctx).and_then(|()| ctx.manifest.finalize());
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "off" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: Command, ctx: &mut Ctx) -> Result<()> {
    match command {
        Command::Pf(args) => cmd_pf(args, ctx),
        Command::Linearize(args) => cmd_linearize(args, ctx),
        Command::ValidateModel(args) => cmd_validate(args, ctx),
        Command::Stability(args) => cmd_stability(args, ctx),
        Command::Design(args) => cmd_design(args, ctx),
        Command::Simulate(args) => cmd_simulate(args, ctx).map(|_| ()),
        Command::Scenario(cmd) => cmd_scenario(cmd, ctx),
        Command::Report(cmd) => report::dispatch(cmd, ctx),
    }
}

/// Resolve a `--scenario` spec: `zero`, `worst`, an id in the supplied set,
/// or a path to a single-scenario CSV.
pub fn resolve_scenario(
    spec: &str,
    net: &NetworkModel,
    set: Option<&ScenarioSet>,
    pf: &PfConfig,
) -> Result<Scenario> {
    match spec {
        "zero" => Ok(Scenario::zero(net.n())),
        "worst" => {
            let set = set.ok_or_else(|| {
                CliError::Usage("--scenario worst needs --scenarios".to_string())
            })?;
            let pick = select_worst_case(set, net, pf)?;
            Ok(set.scenarios[pick.index].clone())
        }
        other => {
            if let Some(set) = set {
                if let Some(s) = set.find(other) {
                    return Ok(s.clone());
                }
            }
            let path = Path::new(other);
            if path.exists() {
                let file_set = scenarios::load_timeseries(path, net)?;
                if file_set.len() != 1 {
                    return Err(CliError::Usage(format!(
                        "scenario file `{other}` must hold exactly one timestamp, found {}",
                        file_set.len()
                    )));
                }
                return Ok(file_set.scenarios.into_iter().next().expect("one scenario"));
            }
            Err(CliError::UnknownScenario(other.to_string()))
        }
    }
}

fn cmd_pf(args: PfArgs, ctx: &mut Ctx) -> Result<()> {
    let net = ctx.load_feeder(&args.feeder)?;
    let set = match &args.scenarios {
        Some(path) => Some(ctx.load_scenarios(path, &net)?),
        None => None,
    };
    let scen = resolve_scenario(&args.scenario, &net, set.as_ref(), &ctx.pf)?;
    let prof = solve_pf(&net, &scen.open_loop_injection(), &ctx.pf)?;
    let v_map: serde_json::Map<String, serde_json::Value> = (0..net.n())
        .map(|i| (net.node(i).id.clone(), json!(prof.v[i])))
        .collect();
    let summary = json!({
        "scenario": scen.id,
        "converged": prof.converged,
        "iterations": prof.iterations,
        "max_mismatch": prof.max_mismatch,
        "v": v_map,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_path(out).map_err(|e| CliError::Write {
            path: out.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        w.write_record(["node_id", "v_pu"]).ok();
        for i in 0..net.n() {
            w.write_record([net.node(i).id.clone(), prof.v[i].to_string()])
                .ok();
        }
        w.flush().map_err(|source| CliError::Write {
            path: out.clone(),
            source,
        })?;
        ctx.manifest.record_output(out);
    }
    ctx.manifest
        .set_config(json!({"scenario": args.scenario, "pf_tol": ctx.pf.tolerance}));
    Ok(())
}

fn cmd_linearize(args: LinearizeArgs, ctx: &mut Ctx) -> Result<()> {
    let net = ctx.load_feeder(&args.feeder)?;
    ctx.manifest.record_input(&args.opoint);
    let (p0, q0) = scenarios::load_opoint(&args.opoint, &net)?;
    let model = parallel::build_jacobians_parallel(&net, &p0, &q0, args.eps, &ctx.pf)?;
    modelfile::save_model(&args.out, &net, &model)?;
    ctx.manifest.record_output(&args.out);
    ctx.manifest.set_config(json!({"eps": args.eps}));
    log::info!(
        "linearized {} nodes with eps = {} ({} power flow solves)",
        net.n(),
        args.eps,
        4 * net.n() + 1
    );
    println!(
        "{}",
        json!({"nodes": net.n(), "solves": 4 * net.n() + 1, "out": args.out})
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs, ctx: &mut Ctx) -> Result<()> {
    let net = ctx.load_feeder(&args.feeder)?;
    let topo = validate_radial(&net);
    let mut result = json!({
        "feeder": {
            "pass": topo.pass(),
            "spanning_tree": topo.spanning_tree,
            "impedances_ok": topo.impedances_ok,
            "generator_set_ok": topo.generator_set_ok,
            "head_voltage_ok": topo.head_voltage_ok,
            "n": net.n(),
            "n_g": net.n_g(),
            "max_depth": topo.depths.iter().copied().max().unwrap_or(0),
            "fingerprint": feeder::fingerprint_hex(&net),
        },
        "pass": topo.pass(),
    });
    if let Some(model_path) = &args.model {
        ctx.manifest.record_input(model_path);
        let model = modelfile::load_model(model_path, &net)?;
        // fresh solve at the stored operating point must reproduce v_base
        let base = solve_pf(
            &net,
            &vvc_core::powerflow::Injection::new(model.p0.clone(), model.q0.clone()),
            &ctx.pf,
        )?;
        let base_gap = if base.converged {
            (&base.v - &model.v_base).amax()
        } else {
            f64::INFINITY
        };
        // seeded dense probe against the Jacobian
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut dq: DVector<f64> = DVector::from_fn(net.n(), |_, _| rng.random_range(-1.0..1.0));
        dq *= 1e-4 / dq.amax();
        let probe = solve_pf(
            &net,
            &vvc_core::powerflow::Injection::new(model.p0.clone(), &model.q0 + &dq),
            &ctx.pf,
        )?;
        let probe_gap = if probe.converged {
            (&probe.v - (&model.v_base + &model.jq * &dq)).amax()
        } else {
            f64::INFINITY
        };
        let model_pass = base_gap <= 1e-9 && probe_gap <= 1e-6;
        result["model"] = json!({
            "fingerprint_match": true,
            "base_case_gap": base_gap,
            "probe_gap": probe_gap,
            "pass": model_pass,
        });
        let overall = result["pass"].as_bool().unwrap_or(false) && model_pass;
        result["pass"] = json!(overall);
    }
    println!("{}", serde_json::to_string_pretty(&result).expect("json"));
    Ok(())
}

fn load_plant(
    plant: &str,
    model_path: Option<&PathBuf>,
    net: &NetworkModel,
    ctx: &mut Ctx,
) -> Result<LinearPlant> {
    match plant {
        "lpf" => {
            let path = model_path.ok_or_else(|| {
                CliError::Usage("--plant lpf needs --model".to_string())
            })?;
            ctx.manifest.record_input(path);
            Ok(LinearPlant::Lpf(modelfile::load_model(path, net)?))
        }
        "ldf" => Ok(LinearPlant::Ldf(build_ldf(net))),
        other => Err(CliError::Usage(format!(
            "unknown plant `{other}` (expected lpf|ldf)"
        ))),
    }
}

fn cmd_stability(args: StabilityArgs, ctx: &mut Ctx) -> Result<()> {
    let net = ctx.load_feeder(&args.feeder)?;
    let plant = load_plant(&args.plant, args.model.as_ref(), &net, ctx)?;
    let criterion = parse_criterion(&args.criterion)?;

    if let Some(region_out) = &args.region_out {
        let nodes = args.region_nodes.as_deref().ok_or_else(|| {
            CliError::Usage("--region-out needs --region-nodes a,b".to_string())
        })?;
        let ids: Vec<&str> = nodes.split(',').collect();
        if ids.len() != 2 {
            return Err(CliError::Usage(
                "--region-nodes takes exactly two comma-separated node ids".to_string(),
            ));
        }
        let a = net
            .index_of(ids[0])
            .ok_or_else(|| CliError::UnknownNode(ids[0].to_string()))?;
        let b = net
            .index_of(ids[1])
            .ok_or_else(|| CliError::UnknownNode(ids[1].to_string()))?;
        let sens = plant.q_sensitivity();
        let block =
            nalgebra::DMatrix::from_fn(2, 2, |i, j| sens[([a, b][i], [a, b][j])]);
        report::write_region_grid(
            region_out,
            &block,
            args.region_grid,
            args.region_kmin,
            args.epsilon,
        )?;
        ctx.manifest.record_output(region_out);
        ctx.manifest.set_config(json!({
            "mode": "region", "nodes": ids, "grid": args.region_grid,
            "kmin": args.region_kmin, "epsilon": args.epsilon,
        }));
        return Ok(());
    }

    let k_path = args
        .k
        .as_ref()
        .ok_or_else(|| CliError::Usage("--k design.json is required".to_string()))?;
    ctx.manifest.record_input(k_path);
    let (k, _) = designfile::load_design(k_path, &net)?;
    let verdict = check_stability(&plant, &k, criterion, args.epsilon)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "criterion": verdict.criterion.as_str(),
            "value": verdict.value,
            "margin": verdict.margin,
            "feasible": verdict.feasible,
            "epsilon": verdict.epsilon,
        }))
        .expect("json")
    );
    ctx.manifest
        .set_config(json!({"criterion": args.criterion, "epsilon": args.epsilon}));
    Ok(())
}

fn cmd_design(args: DesignArgs, ctx: &mut Ctx) -> Result<()> {
    let net = ctx.load_feeder(&args.feeder)?;
    let plant = load_plant(&args.plant, args.model.as_ref(), &net, ctx)?;
    let set = ctx.load_scenarios(&args.scenarios, &net)?;
    let scen = resolve_scenario(&args.scenario, &net, Some(&set), &ctx.pf)?;
    let criterion = parse_criterion(&args.criterion)?;
    let offset = plant.offset(&scen)?;
    let problem = DesignProblem {
        plant: &plant,
        gens: net.generator_set().to_vec(),
        offset,
        v_ref: DVector::from_element(net.n(), args.vref),
        beta: args.beta,
        epsilon: args.epsilon,
        criterion,
        multistart: args.starts,
        seed: ctx.seed,
    };
    if net.n_g() == 0 {
        log::warn!("feeder has no generators; emitting the empty design");
    }
    let result = parallel::optimize_slopes_parallel(&problem)?;
    designfile::save_design(&args.out, &net, &plant, &result, args.beta, args.epsilon, ctx.seed)?;
    ctx.manifest.record_output(&args.out);
    ctx.manifest.set_config(json!({
        "criterion": args.criterion, "beta": args.beta, "epsilon": args.epsilon,
        "starts": args.starts, "scenario": scen.id, "plant": args.plant, "vref": args.vref,
    }));
    ctx.manifest.set_seeds(json!({"seed": ctx.seed}));
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "objective": result.objective,
            "deviation_term": result.deviation_term,
            "regularization_term": result.regularization_term,
            "criterion_value": result.verdict.value,
            "feasible": result.verdict.feasible,
            "best_start_index": result.best_start_index,
            "starts_tried": result.starts_tried,
            "out": args.out,
        }))
        .expect("json")
    );
    Ok(())
}

pub fn cmd_simulate(args: SimulateArgs, ctx: &mut Ctx) -> Result<RunSummary> {
    let net = ctx.load_feeder(&args.feeder)?;
    ctx.manifest.record_input(&args.design);
    let (k, _) = designfile::load_design(&args.design, &net)?;
    if args.scale < 0.0 {
        return Err(CliError::Usage("--scale must be non-negative".to_string()));
    }
    let k = k.scaled(args.scale);
    let set = match &args.scenarios {
        Some(path) => Some(ctx.load_scenarios(path, &net)?),
        None => None,
    };
    let scen = resolve_scenario(&args.scenario, &net, set.as_ref(), &ctx.pf)?;
    let mode = match args.mode.as_str() {
        "nonincremental" => LoopMode::NonIncremental,
        "incremental" => LoopMode::Incremental,
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode `{other}` (expected nonincremental|incremental)"
            )))
        }
    };
    let cfg = LoopConfig {
        mode,
        dt_over_tau: args.dt_over_tau,
        conv_tol: args.conv_tol,
        max_steps: args.max_steps,
        divergence_v_limit: args.divergence_limit,
        history_stride: args.history_stride,
    };
    let v_ref = DVector::from_element(net.n(), args.vref);
    let trace = simulate_closed_loop(&net, &k, &scen, &v_ref, &cfg, &ctx.pf)?;
    let summary = RunSummary::from_trace(&trace);
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    if let Some(out) = &args.out {
        tracefile::save_trace(out, &net, &trace)?;
        ctx.manifest.record_output(out);
    }
    if let Some(path) = &args.summary_out {
        scenarios::write_json_pretty(path, &summary)?;
        ctx.manifest.record_output(path);
    }
    ctx.manifest.set_config(json!({
        "scenario": scen.id, "mode": args.mode, "dt_over_tau": args.dt_over_tau,
        "scale": args.scale, "conv_tol": args.conv_tol, "max_steps": args.max_steps,
        "vref": args.vref,
    }));
    Ok(summary)
}

fn cmd_scenario(cmd: ScenarioCmd, ctx: &mut Ctx) -> Result<()> {
    match cmd {
        ScenarioCmd::Synth { feeder, config, out } => {
            let net = ctx.load_feeder(&feeder)?;
            ctx.manifest.record_input(&config);
            let cfg = scenarios::load_synth_config(&config, &net)?;
            let year = synthesize_year(&net, &cfg, ctx.seed)?;
            scenarios::save_timeseries(&out, &net, &year)?;
            ctx.manifest.record_output(&out);
            ctx.manifest.set_seeds(json!({"seed": ctx.seed}));
            ctx.manifest.set_config(json!({"noise": cfg.noise}));
            println!("{}", json!({"scenarios": year.len(), "out": out}));
            Ok(())
        }
        ScenarioCmd::Split {
            feeder,
            scenarios: scen_path,
            fraction,
            out_train,
            out_test,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let split = split_train_test(&set, fraction, ctx.seed)?;
            scenarios::save_timeseries(&out_train, &net, &split.train)?;
            scenarios::save_timeseries(&out_test, &net, &split.test)?;
            ctx.manifest.record_output(&out_train);
            ctx.manifest.record_output(&out_test);
            ctx.manifest.set_seeds(json!({"seed": ctx.seed}));
            ctx.manifest.set_config(json!({"fraction": fraction}));
            println!(
                "{}",
                json!({"train": split.train.len(), "test": split.test.len()})
            );
            Ok(())
        }
        ScenarioCmd::Opoint {
            feeder,
            scenarios: scen_path,
            out,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let (p0, q0) = average_operating_point(&set)?;
            scenarios::save_opoint(&out, &net, &p0, &q0, set.len())?;
            ctx.manifest.record_output(&out);
            println!("{}", json!({"samples": set.len(), "out": out}));
            Ok(())
        }
        ScenarioCmd::Worst {
            feeder,
            scenarios: scen_path,
            out,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let pick = select_worst_case(&set, &net, &ctx.pf)?;
            let file = PickFile::from(&pick);
            println!("{}", serde_json::to_string_pretty(&file).expect("json"));
            if let Some(path) = &out {
                scenarios::write_json_pretty(path, &file)?;
                ctx.manifest.record_output(path);
            }
            Ok(())
        }
        ScenarioCmd::Hours {
            feeder,
            scenarios: scen_path,
            out,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let hours = select_exemplary_hours(&set, &net, &ctx.pf)?;
            let file = HoursFile {
                a: PickFile::from(&hours.a),
                b: PickFile::from(&hours.b),
                c: PickFile::from(&hours.c),
                d: PickFile::from(&hours.d),
            };
            println!("{}", serde_json::to_string_pretty(&file).expect("json"));
            if let Some(path) = &out {
                scenarios::write_json_pretty(path, &file)?;
                ctx.manifest.record_output(path);
            }
            Ok(())
        }
    }
}

/// Model prediction at open loop for the error reports.
pub fn open_loop_model_voltages(
    model: &vvc_core::linmodels::LpfModel,
    scen: &Scenario,
) -> Result<DVector<f64>> {
    let offset = lpf_offset(model, scen)?;
    Ok(lpf_predict(model, &offset, &DVector::zeros(model.v_base.len()))?)
}

/// Shared by `report model-error`.
pub fn run_model_error(
    net: &NetworkModel,
    model: &vvc_core::linmodels::LpfModel,
    set: &ScenarioSet,
    pf: &PfConfig,
    bins: usize,
) -> Result<vvc_core::linmodels::ErrorReport> {
    let ldf = build_ldf(net);
    Ok(model_error_report(net, model, &ldf, set, pf, bins)?)
}

/// Criterion value helper for region sampling.
pub fn region_value(
    block: &nalgebra::DMatrix<f64>,
    k1: f64,
    k2: f64,
    criterion: Criterion,
) -> Result<f64> {
    let slopes = DVector::from_vec(vec![k1, k2]);
    Ok(criterion_value(block, &[0, 1], &slopes, criterion)?)
}

/// Gain vector scattered from a uniform slope at every generator.
pub fn uniform_gains(net: &NetworkModel, slope: f64) -> Result<GainVector> {
    let gens = net.generator_set();
    let slopes = DVector::from_element(gens.len(), slope);
    Ok(GainVector::from_generator_slopes(net.n(), gens, &slopes)?)
}
