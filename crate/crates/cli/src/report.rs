//! Plot-ready CSV outputs: error histograms, per-hour deviation bars,
//! closed-loop traces, feasibility-region grids, and node-depth voltage
//! clouds.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;
use vvc_core::network::NetworkModel;
use vvc_core::powerflow::{solve_pf, PfConfig};
use vvc_core::scenario::{Scenario, ScenarioSet};
use vvc_core::simloop::{simulate_closed_loop, LoopConfig, LoopMode, LoopOutcome};
use vvc_core::stability::{Criterion, GainVector};

use crate::cli::{cmd_simulate, Ctx, ReportCmd};
use crate::error::{CliError, Result};
use crate::scenarios;
use crate::{designfile, modelfile};

pub fn dispatch(cmd: ReportCmd, ctx: &mut Ctx) -> Result<()> {
    match cmd {
        ReportCmd::ModelError {
            feeder,
            model,
            scenarios: scen_path,
            out_records,
            out_hist,
            bins,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            ctx.manifest.record_input(&model);
            let model = modelfile::load_model(&model, &net)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let report = crate::cli::run_model_error(&net, &model, &set, &ctx.pf, bins)?;
            if let Some(path) = &out_records {
                write_error_records(path, &net, &report)?;
                ctx.manifest.record_output(path);
            }
            write_error_histogram(&out_hist, &report)?;
            ctx.manifest.record_output(&out_hist);
            println!(
                "{}",
                json!({
                    "scenarios": set.len(),
                    "skipped": report.skipped.len(),
                    "lpf_max_abs_error": report.lpf_max_abs_error,
                    "ldf_max_abs_error": report.ldf_max_abs_error,
                })
            );
            Ok(())
        }
        ReportCmd::Bars {
            feeder,
            scenarios: scen_path,
            hours,
            designs,
            vref,
            conv_tol,
            max_steps,
            out,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            ctx.manifest.record_input(&hours);
            let hours: scenarios::HoursFile = scenarios::read_json(&hours)?;
            let schemes = parse_schemes(&designs, &net, ctx)?;
            write_bars(&out, &net, &set, &hours, &schemes, vref, conv_tol, max_steps, &ctx.pf)?;
            ctx.manifest.record_output(&out);
            Ok(())
        }
        ReportCmd::Trace(args) => {
            if args.out.is_none() {
                return Err(CliError::Usage("report trace needs --out".to_string()));
            }
            cmd_simulate(args, ctx).map(|_| ())
        }
        ReportCmd::Cloud {
            feeder,
            scenarios: scen_path,
            designs,
            limit,
            vref,
            conv_tol,
            max_steps,
            out,
        } => {
            let net = ctx.load_feeder(&feeder)?;
            let set = ctx.load_scenarios(&scen_path, &net)?;
            let schemes = parse_schemes(&designs, &net, ctx)?;
            write_cloud(&out, &net, &set, &schemes, limit, vref, conv_tol, max_steps, &ctx.pf)?;
            ctx.manifest.record_output(&out);
            Ok(())
        }
    }
}

/// A named control scheme for the comparison reports.
pub struct Scheme {
    pub name: String,
    pub k: GainVector,
    pub mode: LoopMode,
    pub dt_over_tau: f64,
}

/// Parse `NAME=PATH[:scale=S][:mode=incremental][:dt=D]`.
fn parse_schemes(specs: &[String], net: &NetworkModel, ctx: &mut Ctx) -> Result<Vec<Scheme>> {
    let mut schemes = Vec::new();
    for spec in specs {
        let (name, rest) = spec.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("scheme `{spec}` must look like NAME=PATH[:opts]"))
        })?;
        let mut parts = rest.split(':');
        let path = PathBuf::from(parts.next().unwrap_or_default());
        ctx.manifest.record_input(&path);
        let (mut k, _) = designfile::load_design(&path, net)?;
        let mut mode = LoopMode::NonIncremental;
        let mut dt = 1.0;
        for opt in parts {
            match opt.split_once('=') {
                Some(("scale", s)) => {
                    let factor: f64 = s.parse().map_err(|_| {
                        CliError::Usage(format!("bad scale in scheme `{spec}`"))
                    })?;
                    k = k.scaled(factor);
                }
                Some(("dt", s)) => {
                    dt = s.parse().map_err(|_| {
                        CliError::Usage(format!("bad dt in scheme `{spec}`"))
                    })?;
                }
                Some(("mode", "incremental")) | None if opt == "mode=incremental" => {
                    mode = LoopMode::Incremental;
                }
                _ => {
                    return Err(CliError::Usage(format!(
                        "unknown option `{opt}` in scheme `{spec}`"
                    )))
                }
            }
        }
        if mode == LoopMode::NonIncremental {
            dt = 1.0;
        }
        schemes.push(Scheme {
            name: name.to_string(),
            k,
            mode,
            dt_over_tau: dt,
        });
    }
    Ok(schemes)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_error_records(
    path: &Path,
    net: &NetworkModel,
    report: &vvc_core::linmodels::ErrorReport,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["scenario_id", "node_id", "model", "v_model", "v_ac", "error"])
        .ok();
    for rec in &report.records {
        w.write_record([
            rec.scenario_id.clone(),
            net.node(rec.node).id.clone(),
            rec.model.as_str().to_string(),
            rec.v_model.to_string(),
            rec.v_ac.to_string(),
            rec.error().to_string(),
        ])
        .ok();
    }
    flush(w, path)
}

pub fn write_error_histogram(
    path: &Path,
    report: &vvc_core::linmodels::ErrorReport,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["model", "bin_lo", "bin_hi", "count"]).ok();
    let hist = &report.histogram;
    for (slot, count) in hist.lpf_counts.iter().enumerate() {
        w.write_record([
            "lpf".to_string(),
            hist.edges[slot].to_string(),
            hist.edges[slot + 1].to_string(),
            count.to_string(),
        ])
        .ok();
    }
    for (slot, count) in hist.ldf_counts.iter().enumerate() {
        w.write_record([
            "ldf".to_string(),
            hist.edges[slot].to_string(),
            hist.edges[slot + 1].to_string(),
            count.to_string(),
        ])
        .ok();
    }
    flush(w, path)
}

/// Feasibility grid over `(k1, k2)` in `[kmin, 0]^2` for all three criteria.
pub fn write_region_grid(
    path: &Path,
    block: &DMatrix<f64>,
    grid: usize,
    kmin: f64,
    epsilon: f64,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k1", "k2", "rho_feasible", "norm2_feasible", "holder_feasible"])
        .ok();
    let limit = 1.0 - epsilon;
    let grid = grid.max(2);
    for a in 0..grid {
        let k1 = kmin * (a as f64) / (grid as f64 - 1.0);
        for b in 0..grid {
            let k2 = kmin * (b as f64) / (grid as f64 - 1.0);
            let feasible = |c: Criterion| -> Result<bool> {
                Ok(crate::cli::region_value(block, k1, k2, c)? <= limit)
            };
            w.write_record([
                k1.to_string(),
                k2.to_string(),
                (feasible(Criterion::Rho)? as u8).to_string(),
                (feasible(Criterion::Norm2)? as u8).to_string(),
                (feasible(Criterion::Holder)? as u8).to_string(),
            ])
            .ok();
        }
    }
    flush(w, path)
}

#[allow(clippy::too_many_arguments)]
fn write_bars(
    path: &Path,
    net: &NetworkModel,
    set: &ScenarioSet,
    hours: &scenarios::HoursFile,
    schemes: &[Scheme],
    vref: f64,
    conv_tol: f64,
    max_steps: usize,
    pf: &PfConfig,
) -> Result<()> {
    let v_ref = DVector::from_element(net.n(), vref);
    let mut w = csv_writer(path)?;
    w.write_record(["hour", "scenario_id", "scheme", "outcome", "dev2", "devinf"])
        .ok();
    for (label, pick) in [
        ("A", &hours.a),
        ("B", &hours.b),
        ("C", &hours.c),
        ("D", &hours.d),
    ] {
        let scen = set
            .find(&pick.id)
            .ok_or_else(|| CliError::UnknownScenario(pick.id.clone()))?;
        // baseline: open loop
        let open = solve_pf(net, &scen.open_loop_injection(), pf)?;
        let m = vvc_core::simloop::deviation_metrics(&open.v, &v_ref);
        w.write_record([
            label.to_string(),
            scen.id.clone(),
            "baseline".to_string(),
            if open.converged { "converged" } else { "diverged" }.to_string(),
            m.dev2.to_string(),
            m.devinf.to_string(),
        ])
        .ok();
        for scheme in schemes {
            let cfg = LoopConfig {
                mode: scheme.mode,
                dt_over_tau: scheme.dt_over_tau,
                conv_tol,
                max_steps,
                divergence_v_limit: 0.5,
                history_stride: usize::MAX,
            };
            let trace = simulate_closed_loop(net, &scheme.k, scen, &v_ref, &cfg, pf)?;
            w.write_record([
                label.to_string(),
                scen.id.clone(),
                scheme.name.clone(),
                trace.outcome.as_str().to_string(),
                trace.metrics.dev2.to_string(),
                trace.metrics.devinf.to_string(),
            ])
            .ok();
        }
    }
    flush(w, path)
}

#[allow(clippy::too_many_arguments)]
fn write_cloud(
    path: &Path,
    net: &NetworkModel,
    set: &ScenarioSet,
    schemes: &[Scheme],
    limit: usize,
    vref: f64,
    conv_tol: f64,
    max_steps: usize,
    pf: &PfConfig,
) -> Result<()> {
    let v_ref = DVector::from_element(net.n(), vref);
    let count = if limit == 0 { set.len() } else { limit.min(set.len()) };
    let picked: Vec<&Scenario> = set.scenarios[..count].iter().collect();

    // final voltages per (scheme, scenario); simulations are independent
    let runs: Vec<(String, Vec<(String, Option<DVector<f64>>)>)> = {
        let mut all = Vec::new();
        let baseline: Vec<(String, Option<DVector<f64>>)> = picked
            .par_iter()
            .map(|scen| {
                let prof = solve_pf(net, &scen.open_loop_injection(), pf).ok();
                let v = prof.filter(|p| p.converged).map(|p| p.v);
                (scen.id.clone(), v)
            })
            .collect();
        all.push(("baseline".to_string(), baseline));
        for scheme in schemes {
            let cfg = LoopConfig {
                mode: scheme.mode,
                dt_over_tau: scheme.dt_over_tau,
                conv_tol,
                max_steps,
                divergence_v_limit: 0.5,
                history_stride: usize::MAX,
            };
            let finals: Vec<(String, Option<DVector<f64>>)> = picked
                .par_iter()
                .map(|scen| {
                    let trace = simulate_closed_loop(net, &scheme.k, scen, &v_ref, &cfg, pf).ok();
                    let v = trace
                        .filter(|t| t.outcome == LoopOutcome::Converged)
                        .map(|t| t.v_final);
                    (scen.id.clone(), v)
                })
                .collect();
            all.push((scheme.name.clone(), finals));
        }
        all
    };

    let mut w = csv_writer(path)?;
    w.write_record(["depth", "node_id", "scenario_id", "scheme", "v_pu"])
        .ok();
    for (scheme_name, finals) in &runs {
        for (scenario_id, v) in finals {
            let Some(v) = v else {
                log::warn!("cloud: `{scheme_name}` did not converge on `{scenario_id}`, skipped");
                continue;
            };
            for i in 0..net.n() {
                w.write_record([
                    net.depth(i).to_string(),
                    net.node(i).id.clone(),
                    scenario_id.clone(),
                    scheme_name.clone(),
                    v[i].to_string(),
                ])
                .ok();
            }
        }
    }
    flush(w, path)
}
