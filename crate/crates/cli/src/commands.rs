use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lqmfg_core::cash::{cash_default_params, run_cash_experiment, write_scaling_csv, CashOptions};
use lqmfg_core::consistency::{solve_cc_decoupled, solve_cc_fixed_point};
use lqmfg_core::nash::scaling_sweep;
use lqmfg_core::path::fmt_f64;
use lqmfg_core::riccati::{check_monotonicity, solve_p, solve_pi};
use lqmfg_core::{validate, Equilibrium, FixedPointOptions, ModelParams, Result, SimConfig, ValidatedModel, VectorPath};
use serde::Serialize;

use crate::manifest::{Recorder, RunManifest};
use crate::{CcArgs, CashArgs, Method, ModelArgs, RiccatiArgs, SimulateArgs, SweepArgs};

struct LoadedModel {
    bytes: Vec<u8>,
    model: ValidatedModel,
}

fn load(args: &ModelArgs) -> Result<LoadedModel> {
    let bytes = fs::read(&args.model)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", args.model.display())))?;
    let mut params = ModelParams::from_json_str(&String::from_utf8_lossy(&bytes))?;
    if let Some(n) = args.steps {
        params = params.with_steps(n)?;
    }
    Ok(LoadedModel {
        bytes,
        model: validate(params)?,
    })
}

fn flags<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    BTreeMap::from(pairs)
}

fn steps_flag(args: &ModelArgs) -> String {
    args.steps.map_or_else(|| "model".to_string(), |n| n.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_path_csv<V: lqmfg_core::path::NodeValue>(
    rec: &mut Recorder,
    dir: &Path,
    file: &str,
    name: &str,
    path: &lqmfg_core::path::Path<V>,
) -> Result<()> {
    let target = dir.join(file);
    let mut out = BufWriter::new(File::create(&target)?);
    path.write_csv(name, &mut out)?;
    out.flush()?;
    rec.output(&target, path.values().len());
    Ok(())
}

fn finish(rec: Recorder, dir: &Path, file: &str) -> Result<RunManifest> {
    let manifest = rec.finish();
    write_json(&dir.join(file), &manifest)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct ValidationSummary {
    n: usize,
    k: usize,
    horizon: f64,
    n_steps: usize,
    dt: f64,
    affine_extension: bool,
    /// Assumptions confirmed by validation.
    checks: Vec<&'static str>,
    monotonicity: lqmfg_core::MonotonicityReport,
}

pub fn validate_model(args: &ModelArgs) -> Result<()> {
    let loaded = load(args)?;
    let vm = &loaded.model;
    let p = solve_p(vm)?;
    let grid = vm.grid();
    let summary = ValidationSummary {
        n: vm.dims().n,
        k: vm.dims().k,
        horizon: grid.horizon(),
        n_steps: grid.n_steps(),
        dt: grid.dt(),
        affine_extension: vm.has_affine(),
        checks: vec![
            "dimensions consistent",
            "Q, M symmetric positive semidefinite",
            "R symmetric positive definite",
            "K symmetric, I - K invertible",
            "H invertible",
            "control Riccati solvable on [0, T]",
        ],
        monotonicity: check_monotonicity(vm, &p)?,
    };
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(&summary)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn riccati(args: &RiccatiArgs) -> Result<RunManifest> {
    let loaded = load(&args.model)?;
    let mut rec = Recorder::new("riccati", &loaded.bytes, &flags([("steps", steps_flag(&args.model))]));
    let p = solve_p(&loaded.model)?;
    let pi = solve_pi(&loaded.model)?;
    fs::create_dir_all(&args.out_dir)?;
    write_path_csv(&mut rec, &args.out_dir, "P.csv", "P", &p)?;
    write_path_csv(&mut rec, &args.out_dir, "Pi.csv", "Pi", &pi)?;
    finish(rec, &args.out_dir, "run_manifest.json")
}

#[derive(Serialize)]
struct CcSummary {
    method: lqmfg_core::CCMethod,
    iterations: usize,
    residual: lqmfg_core::CCResidual,
    monotonicity: lqmfg_core::MonotonicityReport,
}

pub fn cc(args: &CcArgs) -> Result<RunManifest> {
    let loaded = load(&args.model)?;
    let vm = &loaded.model;
    let mut rec = Recorder::new(
        "cc",
        &loaded.bytes,
        &flags([
            ("steps", steps_flag(&args.model)),
            ("method", format!("{:?}", args.method)),
            ("tol", fmt_f64(args.tol)),
            ("max_iter", args.max_iter.to_string()),
            ("damping", fmt_f64(args.damping)),
        ]),
    );
    let p = solve_p(vm)?;
    let sol = match args.method {
        Method::Decoupled => solve_cc_decoupled(vm, &p)?,
        Method::FixedPoint => solve_cc_fixed_point(
            vm,
            &p,
            FixedPointOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                damping: args.damping,
            },
        )?,
    };
    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    write_path_csv(&mut rec, dir, "m.csv", "m", &sol.m)?;
    write_path_csv(&mut rec, dir, "X.csv", "X", &sol.x)?;
    write_path_csv(&mut rec, dir, "psi.csv", "psi", &sol.psi)?;
    let residuals = dir.join("residuals.json");
    write_json(
        &residuals,
        &CcSummary {
            method: sol.method,
            iterations: sol.iterations,
            residual: sol.residual,
            monotonicity: check_monotonicity(vm, &p)?,
        },
    )?;
    rec.output(&residuals, 0);
    finish(rec, dir, "run_manifest.json")
}

#[derive(Serialize)]
struct SimulationSummary {
    n_agents: usize,
    seed: u64,
    n_steps: usize,
    mean_cost: f64,
    mean_limiting_cost: f64,
    costs: Vec<f64>,
    limiting_costs: Vec<f64>,
    gap_metrics: lqmfg_core::population::GapMetrics,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn component_header(name: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (1..=dim).map(move |i| format!("{name}_{i}"))
}

fn push_entries(row: &mut Vec<String>, path: &VectorPath, k: usize) {
    row.extend(path.at(k).iter().map(|&v| fmt_f64(v)));
}

pub fn simulate(args: &SimulateArgs, seed: u64) -> Result<RunManifest> {
    let loaded = load(&args.model)?;
    let mut rec = Recorder::new(
        "simulate",
        &loaded.bytes,
        &flags([
            ("steps", steps_flag(&args.model)),
            ("N", args.n_agents.to_string()),
            ("seed", seed.to_string()),
        ]),
    );
    let eq = Equilibrium::solve(loaded.model)?;
    let grid = *eq.model.grid();
    let res = eq.simulate(&SimConfig::new(args.n_agents, seed, grid).recording())?;
    let (n, k) = (eq.model.dims().n, eq.model.dims().k);

    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    let agents_path = dir.join("agents.csv");
    let mut out = BufWriter::new(File::create(&agents_path)?);
    let header: Vec<String> = ["agent".to_string(), "t".to_string()]
        .into_iter()
        .chain(component_header("X", n))
        .chain(component_header("Xhat", n))
        .chain(component_header("u", k))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut rows = 0;
    for (i, a) in res.agents.iter().enumerate() {
        for j in 0..grid.len() {
            let mut row = vec![i.to_string(), fmt_f64(grid.node(j))];
            push_entries(&mut row, &a.x, j);
            push_entries(&mut row, &a.xhat, j);
            push_entries(&mut row, &a.u, j);
            writeln!(out, "{}", row.join(","))?;
            rows += 1;
        }
    }
    out.flush()?;
    rec.output(&agents_path, rows);

    let summary_path = dir.join("summary.json");
    write_json(
        &summary_path,
        &SimulationSummary {
            n_agents: args.n_agents,
            seed,
            n_steps: grid.n_steps(),
            mean_cost: mean(&res.costs),
            mean_limiting_cost: mean(&res.limiting_costs),
            costs: res.costs.clone(),
            limiting_costs: res.limiting_costs.clone(),
            gap_metrics: res.gap_metrics,
        },
    )?;
    rec.output(&summary_path, 0);
    finish(rec, dir, "run_manifest.json")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "scaling".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn nash_sweep(args: &SweepArgs, seed: u64) -> Result<RunManifest> {
    let loaded = load(&args.model)?;
    let ns: Vec<String> = args.ns.iter().map(ToString::to_string).collect();
    let mut rec = Recorder::new(
        "nash-sweep",
        &loaded.bytes,
        &flags([
            ("steps", steps_flag(&args.model)),
            ("Ns", ns.join(",")),
            ("replicates", args.replicates.to_string()),
            ("seed", seed.to_string()),
        ]),
    );
    let eq = Equilibrium::solve(loaded.model)?;
    let report = scaling_sweep(&eq, &args.ns, args.replicates, seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let rows = write_scaling_csv(&report, &args.out)?;
    rec.output(&args.out, rows);
    let json = sibling(&args.out, ".json");
    write_json(&json, &report)?;
    rec.output(&json, 0);
    let manifest = rec.finish();
    write_json(&sibling(&args.out, "_manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn cash_example(args: &CashArgs, seed: u64) -> Result<RunManifest> {
    let params = cash_default_params().with_steps(args.steps)?;
    let model_bytes = params.to_json_string()?.into_bytes();
    let mut rec = Recorder::new(
        "cash-example",
        &model_bytes,
        &flags([
            ("steps", args.steps.to_string()),
            ("N", args.n_agents.to_string()),
            ("seed", seed.to_string()),
        ]),
    );
    let opts = CashOptions {
        n_steps: args.steps,
        n_agents: args.n_agents,
        seed,
        ..CashOptions::default()
    };
    fs::create_dir_all(&args.out_dir)?;
    let cash = run_cash_experiment(&opts, &args.out_dir)?;
    for a in &cash.artifacts {
        rec.output(&args.out_dir.join(&a.file), a.rows);
    }
    rec.output(&args.out_dir.join("manifest.json"), 0);
    finish(rec, &args.out_dir, "run_manifest.json")
}
