//! Cash-management example: a scalar model with benchmark `r = 15` and terminal
//! target `l = 3`, plus the series behind its six figures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::consistency::explicit_m_cash;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{validate, AffineCost, Coefficient, Dims, ModelParams, ValidatedModel};
use crate::nash::{scaling_sweep, ScalingReport};
use crate::noise::derive_seed;
use crate::ode::{integrate_matrix_ode, integrate_vector_ode, Direction};
use crate::path::{fmt_f64, MatrixPath, VectorPath};
use crate::population::{Equilibrium, SimConfig};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_AGENTS: usize = 100;

/// `a = 0.5, b = 0.2, b̃ = 0.5, σ = 10, f = 2.8, g = 6, h = 4, r = 15, l = 3`,
/// `T = 10`, `x0 = 3.5`; cost weights `Q = 0, R = 1, K = 0, M = 1`.
pub fn cash_default_params() -> ModelParams {
    ModelParams {
        dims: Dims { n: 1, k: 1 },
        grid: TimeGrid::new(10.0, DEFAULT_STEPS).expect("static grid"),
        drift: Coefficient::scalar(0.5),
        control_gain: Coefficient::scalar(0.2),
        average_gain: Coefficient::scalar(0.5),
        diffusion: Coefficient::scalar(10.0),
        obs_gain: Coefficient::scalar(2.8),
        obs_offset: Coefficient::scalar(6.0),
        obs_noise: Coefficient::scalar(4.0),
        state_weight: Coefficient::scalar(0.0),
        control_weight: Coefficient::scalar(1.0),
        average_weight: DMatrix::zeros(1, 1),
        terminal_weight: DMatrix::from_element(1, 1, 1.0),
        x0: DVector::from_element(1, 3.5),
        affine: Some(AffineCost {
            benchmark: Coefficient::scalar(15.0),
            terminal_target: DVector::from_element(1, 3.0),
        }),
    }
}

#[derive(Clone, Debug)]
pub struct CashScenario {
    pub params: ModelParams,
    pub artifacts: Vec<&'static str>,
}

pub fn cash_scenario() -> CashScenario {
    CashScenario {
        params: cash_default_params(),
        artifacts: vec![
            "P",
            "Gamma",
            "Pi",
            "states_filtering",
            "controls",
            "avg_error",
            "N_gap",
        ],
    }
}

struct Scalars {
    a: f64,
    b: f64,
    bt: f64,
    r: f64,
}

fn scalars(model: &ValidatedModel, j: usize) -> Scalars {
    let c = model.node_at_half(j);
    Scalars {
        a: c.a[(0, 0)],
        b: c.b[(0, 0)],
        bt: c.b_tilde[(0, 0)],
        r: c.benchmark[0],
    }
}

fn require_scalar(model: &ValidatedModel) -> Result<()> {
    let d = model.dims();
    if d.n != 1 || d.k != 1 || !model.has_affine() {
        return Err(Error::NotScalarModel);
    }
    Ok(())
}

/// `Γ̇ + 2[a − P(b + b̃)b]Γ − (b + b̃)bΓ² − b b̃ P² = 0`, `Γ(T) = 0` (unit `R`, zero `K`).
pub fn solve_gamma_scalar(model: &ValidatedModel, p: &MatrixPath) -> Result<MatrixPath> {
    require_scalar(model)?;
    p.ensure_grid(model.grid(), "P")?;
    let ph = p.half_samples();
    integrate_matrix_ode(
        |s, g| {
            let Scalars { a, b, bt, .. } = scalars(model, s.half_index);
            let pv = ph[s.half_index][(0, 0)];
            let gv = g[(0, 0)];
            let d = -(2.0 * (a - pv * (b + bt) * b) * gv - (b + bt) * b * gv * gv - b * bt * pv * pv);
            DMatrix::from_element(1, 1, d)
        },
        DMatrix::zeros(1, 1),
        Direction::Backward,
        model.grid(),
    )
}

/// `Λ̇ + [a − (P + Γ)(b + b̃)b]Λ + (P + Γ)(b + b̃)r = 0`, `Λ(T) = −l`.
pub fn solve_lambda_scalar(model: &ValidatedModel, p: &MatrixPath, gamma: &MatrixPath) -> Result<VectorPath> {
    require_scalar(model)?;
    p.ensure_grid(model.grid(), "P")?;
    gamma.ensure_grid(model.grid(), "Gamma")?;
    let ph = p.half_samples();
    let gh = gamma.half_samples();
    let l = model.terminal_target()[0];
    integrate_vector_ode(
        |s, lam| {
            let Scalars { a, b, bt, r } = scalars(model, s.half_index);
            let pg = ph[s.half_index][(0, 0)] + gh[s.half_index][(0, 0)];
            let d = -((a - pg * (b + bt) * b) * lam[0] + pg * (b + bt) * r);
            DVector::from_element(1, d)
        },
        DVector::from_element(1, -l),
        Direction::Backward,
        model.grid(),
    )
}

#[derive(Clone, Debug)]
pub struct CashOptions {
    pub n_steps: usize,
    pub n_agents: usize,
    pub seed: u64,
    /// Agent counts of the figure-5 comparison.
    pub fig5_agents: [usize; 2],
    /// Seeds averaged in figure 5 and used for the figure-6 median.
    pub figure_seeds: usize,
    pub fig6_max_agents: usize,
    pub ladder: Vec<usize>,
    pub replicates: usize,
    /// Agents whose paths go into figures 3 and 4.
    pub shown_agents: usize,
}

impl Default for CashOptions {
    fn default() -> Self {
        Self {
            n_steps: DEFAULT_STEPS,
            n_agents: DEFAULT_AGENTS,
            seed: 0,
            fig5_agents: [10, 100],
            figure_seeds: 10,
            fig6_max_agents: 100,
            ladder: vec![4, 8, 16, 32, 64, 128],
            replicates: 20,
            shown_agents: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub figure: String,
    pub description: String,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CashManifest {
    pub n_steps: usize,
    pub n_agents: usize,
    pub seed: u64,
    pub artifacts: Vec<ArtifactEntry>,
    pub explicit_m_max_diff: f64,
    pub cc_residual: crate::consistency::CCResidual,
    pub monotonicity: crate::riccati::MonotonicityReport,
    pub scaling: ScalingReport,
}

/// Figure series computed in memory, before anything is written.
#[derive(Clone, Debug)]
pub struct CashFigures {
    pub eq: Equilibrium,
    pub gamma: MatrixPath,
    pub lambda: VectorPath,
    pub explicit_m: VectorPath,
    /// Agent paths `(X, X̂, u)` of the first agents of the main run.
    pub shown: Vec<(VectorPath, VectorPath, VectorPath)>,
    /// Seed-averaged `mean_i |u^(N,-i) − m|²` per node, one curve per entry of `fig5_agents`.
    pub fig5: [Vec<f64>; 2],
    /// `|u^(N,-1) − m|` per node for the first figure seed.
    pub fig5_first_agent: [Vec<f64>; 2],
    /// `ns[j]` and `gaps[s][j]`: state gap of seed `s` at `N = ns[j]`.
    pub fig6_ns: Vec<usize>,
    pub fig6_gaps: Vec<Vec<f64>>,
    pub scaling: ScalingReport,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl CashFigures {
    /// Median over seeds of the figure-6 gap, per `N`.
    pub fn fig6_median(&self) -> Vec<f64> {
        (0..self.fig6_ns.len())
            .map(|j| median(&mut self.fig6_gaps.iter().map(|g| g[j]).collect::<Vec<_>>()))
            .collect()
    }

    /// Median of the figure-6 gap pooled over seeds and over the agent counts of
    /// each doubling bin, as `(lo, hi, median)` with `lo ≤ N < hi`.
    pub fn fig6_binned_median(&self) -> Vec<(usize, usize, f64)> {
        doubling_bins(&self.fig6_ns)
            .into_iter()
            .map(|(lo, hi)| {
                let mut pooled: Vec<f64> = self
                    .fig6_ns
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n >= lo && n < hi)
                    .flat_map(|(j, _)| self.fig6_gaps.iter().map(move |g| g[j]))
                    .collect();
                (lo, hi, median(&mut pooled))
            })
            .collect()
    }
}

/// Doubling bins `[2, 4), [4, 8), …` of the figure-6 agent counts.
pub fn doubling_bins(ns: &[usize]) -> Vec<(usize, usize)> {
    let Some(&max) = ns.iter().max() else {
        return Vec::new();
    };
    let mut bins = Vec::new();
    let mut lo = 2;
    while lo <= max {
        bins.push((lo, 2 * lo));
        lo *= 2;
    }
    bins
}

pub fn compute_cash_figures(opts: &CashOptions) -> Result<CashFigures> {
    if opts.n_agents < 2 || opts.figure_seeds == 0 || opts.fig6_max_agents < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 agents and one figure seed".into(),
        ));
    }
    let model = validate(cash_default_params().with_steps(opts.n_steps)?)?;
    let eq = Equilibrium::solve(model)?;
    let gamma = eq
        .cc
        .gamma
        .clone()
        .ok_or_else(|| Error::InvalidArgument("consistency solve fell back to fixed point".into()))?;
    let lambda = eq.cc.lambda.clone().expect("decoupled solution carries Lambda");
    let explicit_m = explicit_m_cash(&eq.model, &eq.p, &gamma, &lambda)?;
    let grid = *eq.model.grid();

    let main = eq.simulate(&SimConfig::new(opts.n_agents, opts.seed, grid).recording())?;
    let shown = main
        .agents
        .iter()
        .take(opts.shown_agents)
        .map(|a| (a.x.clone(), a.xhat.clone(), a.u.clone()))
        .collect();

    let fig_seeds: Vec<u64> = (0..opts.figure_seeds as u64)
        .map(|s| derive_seed(opts.seed, 1000 + s))
        .collect();
    let len = grid.len();
    let mut fig5 = [vec![0.0; len], vec![0.0; len]];
    let mut fig5_first_agent = [Vec::new(), Vec::new()];
    for (slot, &n) in opts.fig5_agents.iter().enumerate() {
        let runs = fig_seeds
            .par_iter()
            .map(|&s| eq.simulate(&SimConfig::new(n, s, grid)))
            .collect::<Result<Vec<_>>>()?;
        for (idx, run) in runs.iter().enumerate() {
            for (acc, g) in fig5[slot].iter_mut().zip(&run.avg_gap_curve) {
                *acc += g / fig_seeds.len() as f64;
            }
            if idx == 0 {
                fig5_first_agent[slot] = (0..len)
                    .map(|k| (run.control_avg.at(k) - eq.cc.m.at(k)).norm())
                    .collect();
            }
        }
    }

    let fig6_ns: Vec<usize> = (2..=opts.fig6_max_agents).collect();
    let jobs: Vec<(usize, usize)> = (0..fig_seeds.len())
        .flat_map(|s| fig6_ns.iter().map(move |&n| (s, n)))
        .collect();
    let gaps = jobs
        .par_iter()
        .map(|&(s, n)| {
            eq.simulate(&SimConfig::new(n, fig_seeds[s], grid))
                .map(|r| r.gap_metrics.state_gap_sup)
        })
        .collect::<Result<Vec<_>>>()?;
    let fig6_gaps = gaps.chunks(fig6_ns.len()).map(<[f64]>::to_vec).collect();

    let scaling = scaling_sweep(&eq, &opts.ladder, opts.replicates, opts.seed)?;
    Ok(CashFigures {
        eq,
        gamma,
        lambda,
        explicit_m,
        shown,
        fig5,
        fig5_first_agent,
        fig6_ns,
        fig6_gaps,
        scaling,
    })
}

struct CsvFile {
    out: BufWriter<File>,
    rows: usize,
}

impl CsvFile {
    fn create(path: &Path, header: &[String]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, rows: 0 })
    }

    fn row(&mut self, values: impl IntoIterator<Item = String>) -> Result<()> {
        let fields: Vec<String> = values.into_iter().collect();
        writeln!(self.out, "{}", fields.join(","))?;
        self.rows += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Write the figure series and `manifest.json` into `out_dir`.
pub fn write_cash_figures(figs: &CashFigures, opts: &CashOptions, out_dir: &Path) -> Result<CashManifest> {
    std::fs::create_dir_all(out_dir)?;
    let grid = *figs.eq.model.grid();
    let len = grid.len();
    let mut artifacts = Vec::new();
    let mut record = |file: &str, figure: &str, description: &str, rows: usize| {
        artifacts.push(ArtifactEntry {
            file: file.to_string(),
            figure: figure.to_string(),
            description: description.to_string(),
            rows,
        })
    };
    let path = |name: &str| -> PathBuf { out_dir.join(name) };

    let mut f = CsvFile::create(&path("fig1_P_Gamma.csv"), &strings(&["t", "P", "Gamma"]))?;
    for k in 0..len {
        f.row([
            fmt_f64(grid.node(k)),
            fmt_f64(figs.eq.p.at(k)[(0, 0)]),
            fmt_f64(figs.gamma.at(k)[(0, 0)]),
        ])?;
    }
    record("fig1_P_Gamma.csv", "1", "control Riccati P and decoupling coefficient Gamma", f.finish()?);

    let mut f = CsvFile::create(&path("fig2_Pi.csv"), &strings(&["t", "Pi"]))?;
    for k in 0..len {
        f.row([fmt_f64(grid.node(k)), fmt_f64(figs.eq.pi.at(k)[(0, 0)])])?;
    }
    record("fig2_Pi.csv", "2", "filter error covariance Pi", f.finish()?);

    let shown = figs.shown.len();
    let mut header = strings(&["t", "X_mean"]);
    for i in 1..=shown {
        header.push(format!("X_{i}"));
        header.push(format!("Xhat_{i}"));
    }
    let mut f = CsvFile::create(&path("fig3_states_filtering.csv"), &header)?;
    for k in 0..len {
        let mut row = vec![fmt_f64(grid.node(k)), fmt_f64(figs.eq.cc.x.at(k)[0])];
        for (x, xh, _) in &figs.shown {
            row.push(fmt_f64(x.at(k)[0]));
            row.push(fmt_f64(xh.at(k)[0]));
        }
        f.row(row)?;
    }
    record("fig3_states_filtering.csv", "3", "true and filtered states of the first agents", f.finish()?);

    let mut header = strings(&["t", "m", "m_explicit", "psi", "Lambda"]);
    for i in 1..=shown {
        header.push(format!("u_{i}"));
    }
    let mut f = CsvFile::create(&path("fig4_controls.csv"), &header)?;
    for k in 0..len {
        let mut row = vec![
            fmt_f64(grid.node(k)),
            fmt_f64(figs.eq.cc.m.at(k)[0]),
            fmt_f64(figs.explicit_m.at(k)[0]),
            fmt_f64(figs.eq.cc.psi.at(k)[0]),
            fmt_f64(figs.lambda.at(k)[0]),
        ];
        for (_, _, u) in &figs.shown {
            row.push(fmt_f64(u.at(k)[0]));
        }
        f.row(row)?;
    }
    record("fig4_controls.csv", "4", "decentralized controls and the limit m", f.finish()?);

    let [n_lo, n_hi] = opts.fig5_agents;
    let header = vec![
        "t".to_string(),
        format!("mean_sq_err_N{n_lo}"),
        format!("mean_sq_err_N{n_hi}"),
        format!("abs_err_agent1_N{n_lo}"),
        format!("abs_err_agent1_N{n_hi}"),
    ];
    let mut f = CsvFile::create(&path("fig5_avg_error.csv"), &header)?;
    for k in 0..len {
        f.row([
            fmt_f64(grid.node(k)),
            fmt_f64(figs.fig5[0][k]),
            fmt_f64(figs.fig5[1][k]),
            fmt_f64(figs.fig5_first_agent[0][k]),
            fmt_f64(figs.fig5_first_agent[1][k]),
        ])?;
    }
    record("fig5_avg_error.csv", "5", "error between the realized control average and m", f.finish()?);

    let mut header = vec!["N".to_string()];
    for s in 0..figs.fig6_gaps.len() {
        header.push(format!("gap_seed{s}"));
    }
    header.push("median".into());
    let medians = figs.fig6_median();
    let mut f = CsvFile::create(&path("fig6_N_gap.csv"), &header)?;
    for (j, n) in figs.fig6_ns.iter().enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(figs.fig6_gaps.iter().map(|g| fmt_f64(g[j])));
        row.push(fmt_f64(medians[j]));
        f.row(row)?;
    }
    record("fig6_N_gap.csv", "6", "sup_t mean |X_dag - X_star|^2 against N (N >= 2)", f.finish()?);

    let rows = write_scaling_csv(&figs.scaling, &path("scaling.csv"))?;
    record("scaling.csv", "-", "gap metrics per N and replicate", rows);

    let manifest = CashManifest {
        n_steps: opts.n_steps,
        n_agents: opts.n_agents,
        seed: opts.seed,
        artifacts,
        explicit_m_max_diff: figs.explicit_m.max_abs_diff(&figs.eq.cc.m)?,
        cc_residual: figs.eq.cc.residual,
        monotonicity: crate::riccati::check_monotonicity(&figs.eq.model, &figs.eq.p)?,
        scaling: figs.scaling.clone(),
    };
    let mut out = BufWriter::new(File::create(path("manifest.json"))?);
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    out.flush()?;
    Ok(manifest)
}

/// Columns `N,replicate,state_gap,cost_gap,avg_gap`. Returns the row count.
pub fn write_scaling_csv(report: &ScalingReport, path: &Path) -> Result<usize> {
    let mut f = CsvFile::create(path, &strings(&["N", "replicate", "state_gap", "cost_gap", "avg_gap"]))?;
    for c in &report.cells {
        f.row([
            c.n_agents.to_string(),
            c.replicate.to_string(),
            fmt_f64(c.state_gap),
            fmt_f64(c.cost_gap),
            fmt_f64(c.avg_gap),
        ])?;
    }
    f.finish()
}

/// Full pipeline: solve, simulate, write every figure series.
pub fn run_cash_experiment(opts: &CashOptions, out_dir: &Path) -> Result<CashManifest> {
    let figs = compute_cash_figures(opts)?;
    write_cash_figures(&figs, opts, out_dir)
}
