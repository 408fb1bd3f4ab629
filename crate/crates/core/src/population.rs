//! Monte Carlo simulation of `N` agents under the decentralized feedback law
//!
//! ```text
//! u_i = −R⁻¹Bᵀ(P X̂_i + ψ) + K m + r
//! ```
//!
//! Each agent's decentralized state `X*_i` is driven by the frozen limit `m`, so
//! agents are independent and simulate in parallel. A second pass builds the
//! realized control averages and the centralized state `X†_i`, whose drift uses
//! the realized average of the other agents' controls in place of `m`:
//!
//! ```text
//! dX†_i = [A X†_i + B u_i + B̃ u^(N,-i)] dt + σ dW_i
//! ```
//!
//! Both states share the same noise, so `Δ = X† − X*` solves the noise-free
//! recursion `Δ_{k+1} = Δ_k + (A Δ_k + B̃ (u^(N,-i)_k − m_k)) dt`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::consistency::{solve_cc_decoupled, CCSolution};
use crate::error::{Error, Result};
use crate::filter::{self, Scratch};
use crate::grid::TimeGrid;
use crate::model::ValidatedModel;
use crate::noise::{Channel, NoiseStream};
use crate::path::{MatrixPath, VectorPath};
use crate::riccati::{solve_p, solve_pi};

/// Everything the agents need: model, `P`, `Π` and the consistency solution.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub model: ValidatedModel,
    pub p: MatrixPath,
    pub pi: MatrixPath,
    pub cc: CCSolution,
}

impl Equilibrium {
    pub fn solve(model: ValidatedModel) -> Result<Self> {
        let p = solve_p(&model)?;
        let pi = solve_pi(&model)?;
        let cc = solve_cc_decoupled(&model, &p)?;
        Ok(Self { model, p, pi, cc })
    }

    pub fn simulate(&self, cfg: &SimConfig) -> Result<PopulationResult> {
        simulate_population(&self.model, &self.p, &self.pi, &self.cc, cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub n_agents: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub record_paths: bool,
}

impl SimConfig {
    pub fn new(n_agents: usize, seed: u64, grid: TimeGrid) -> Self {
        Self {
            n_agents,
            seed,
            grid,
            record_paths: false,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record_paths = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentPath {
    /// Decentralized state `X*`.
    pub x: VectorPath,
    pub xhat: VectorPath,
    pub u: VectorPath,
    /// Observation `V`, `V(0) = 0`.
    pub v: VectorPath,
    /// Centralized state `X†`.
    pub xdag: Option<VectorPath>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GapMetrics {
    /// `sup_t mean_i |X†_i − X*_i|²`
    pub state_gap_sup: f64,
    /// `|mean_i (J_i − J̄_i)|`, actual minus limiting cost.
    pub cost_gap: f64,
    /// `max_i |J_i − J̄_i|`
    pub cost_gap_max: f64,
    /// `sup_t mean_i |u^(N,-i) − m|²`
    pub avg_gap_sup: f64,
    /// `mean_i |mean_{j≠i} X̂_j(T) − X(T)|²` with `X` from the consistency solution.
    pub filter_mean_gap_terminal: f64,
}

#[derive(Clone, Debug)]
pub struct PopulationResult {
    /// Empty unless paths were recorded.
    pub agents: Vec<AgentPath>,
    /// Realized `u^(N,-1)`, the average seen by the first agent.
    pub control_avg: VectorPath,
    /// `J_i(u*_i, u*_{-i})`, evaluated on `X†_i`.
    pub costs: Vec<f64>,
    /// `J̄_i(u*_i)`, evaluated on `X*_i` with the frozen `m`.
    pub limiting_costs: Vec<f64>,
    pub gap_metrics: GapMetrics,
    /// `mean_i |X†_i − X*_i|²` per node.
    pub state_gap_curve: Vec<f64>,
    /// `mean_i |u^(N,-i) − m|²` per node.
    pub avg_gap_curve: Vec<f64>,
}

/// Per-node data of the feedback law and the filter.
pub(crate) struct Plan<'a> {
    pub model: &'a ValidatedModel,
    pub dt: f64,
    /// `R⁻¹BᵀP`
    feedback: Vec<DMatrix<f64>>,
    /// `−R⁻¹Bᵀψ + K m + r`
    offset: Vec<DVector<f64>>,
    gain: Vec<DMatrix<f64>>,
    pub m: &'a [DVector<f64>],
}

impl<'a> Plan<'a> {
    pub fn new(
        model: &'a ValidatedModel,
        p: &MatrixPath,
        pi: &MatrixPath,
        cc: &'a CCSolution,
    ) -> Result<Self> {
        let grid = model.grid();
        p.ensure_grid(grid, "P")?;
        pi.ensure_grid(grid, "Pi")?;
        cc.psi.ensure_grid(grid, "psi")?;
        cc.m.ensure_grid(grid, "m")?;
        let k_mat = &model.params().average_weight;
        let mut feedback = Vec::with_capacity(grid.len());
        let mut offset = Vec::with_capacity(grid.len());
        let mut gain = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let c = model.node(k);
            feedback.push(&c.r_inv_bt * p.at(k));
            offset.push(k_mat * cc.m.at(k) + &c.benchmark - &c.r_inv_bt * cc.psi.at(k));
            gain.push(filter::filter_gain(c, pi.at(k)));
        }
        Ok(Self {
            model,
            dt: grid.dt(),
            feedback,
            offset,
            gain,
            m: cc.m.values(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.model.grid().n_steps()
    }

    /// `u = −R⁻¹BᵀP X̂ − R⁻¹Bᵀψ + K m + r` at node `k`.
    pub fn control_into(&self, k: usize, xhat: &DVector<f64>, u: &mut DVector<f64>) {
        u.copy_from(&self.offset[k]);
        u.gemv(-1.0, &self.feedback[k], xhat, 1.0);
    }
}

/// What an observer sees at node `k`: the state before the step and, except at
/// the final node, the observation increment over `[t_k, t_{k+1}]`.
pub(crate) struct NodeView<'a> {
    pub k: usize,
    pub x: &'a DVector<f64>,
    pub xhat: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub v: &'a DVector<f64>,
    pub dv: Option<&'a DVector<f64>>,
}

/// Simulate one agent on noise stream `stream`.
pub(crate) fn run_agent(
    plan: &Plan<'_>,
    seed: u64,
    stream: u64,
    mut observe: impl FnMut(NodeView<'_>),
) -> Result<()> {
    let model = plan.model;
    let dims = model.dims();
    let dt = plan.dt;
    let n_steps = plan.n_steps();
    let mut w = NoiseStream::new(seed, stream, Channel::State, dt);
    let mut w_bar = NoiseStream::new(seed, stream, Channel::Observation, dt);
    let mut x = model.params().x0.clone();
    let mut xhat = x.clone();
    let mut v = DVector::zeros(dims.n);
    let mut u = DVector::zeros(dims.k);
    let mut dw = DVector::zeros(dims.n);
    let mut dw_bar = DVector::zeros(dims.n);
    let mut dv = DVector::zeros(dims.n);
    let mut drift = DVector::zeros(dims.n);
    let mut scratch = Scratch::new(dims.n);
    for k in 0..=n_steps {
        plan.control_into(k, &xhat, &mut u);
        if k == n_steps {
            observe(NodeView {
                k,
                x: &x,
                xhat: &xhat,
                u: &u,
                v: &v,
                dv: None,
            });
            break;
        }
        let c = model.node(k);
        w.fill(&mut dw);
        w_bar.fill(&mut dw_bar);
        // dV = (F X + G) dt + H dW̄
        dv.copy_from(&c.g);
        dv.gemv(1.0, &c.f, &x, 1.0);
        dv *= dt;
        dv.gemv(1.0, &c.h, &dw_bar, 1.0);
        observe(NodeView {
            k,
            x: &x,
            xhat: &xhat,
            u: &u,
            v: &v,
            dv: Some(&dv),
        });
        drift.gemv(1.0, &c.a, &x, 0.0);
        drift.gemv(1.0, &c.b, &u, 1.0);
        drift.gemv(1.0, &c.b_tilde, &plan.m[k], 1.0);
        filter::advance(&mut xhat, &dv, &u, &plan.m[k], c, &plan.gain[k], dt, &mut scratch);
        x.axpy(dt, &drift, 1.0);
        x.gemv(1.0, &c.sigma, &dw, 1.0);
        v += &dv;
        if !(x.iter().all(|z| z.is_finite()) && xhat.iter().all(|z| z.is_finite())) {
            return Err(Error::NonFinite {
                context: format!("agent on stream {stream}"),
                t: model.grid().node(k + 1),
            });
        }
    }
    Ok(())
}

/// Node values of one simulated agent.
#[derive(Clone, Debug, Default)]
pub(crate) struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

pub(crate) fn trajectory(plan: &Plan<'_>, seed: u64, stream: u64) -> Result<Trajectory> {
    let len = plan.n_steps() + 1;
    let mut t = Trajectory {
        x: Vec::with_capacity(len),
        xhat: Vec::with_capacity(len),
        u: Vec::with_capacity(len),
        v: Vec::with_capacity(len),
    };
    run_agent(plan, seed, stream, |view| {
        t.x.push(view.x.clone());
        t.xhat.push(view.xhat.clone());
        t.u.push(view.u.clone());
        t.v.push(view.v.clone());
    })?;
    Ok(t)
}

/// `½[∫ (XᵀQX + wᵀRw) dt + (X(T) − l)ᵀM(X(T) − l)]`, `w = u − K avg − r`, trapezoid in time.
pub(crate) fn quadratic_cost<'v>(
    model: &ValidatedModel,
    x: impl Fn(usize) -> &'v DVector<f64>,
    u: impl Fn(usize) -> &'v DVector<f64>,
    avg: impl Fn(usize) -> &'v DVector<f64>,
) -> f64 {
    let grid = model.grid();
    let n = grid.n_steps();
    let k_mat = &model.params().average_weight;
    let mut integral = 0.0;
    for k in 0..=n {
        let c = model.node(k);
        let xk = x(k);
        let w = u(k) - k_mat * avg(k) - &c.benchmark;
        let f = xk.dot(&(&c.q * xk)) + w.dot(&(&c.r * &w));
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        integral += weight * f;
    }
    let e = x(n) - model.terminal_target();
    0.5 * (integral * grid.dt() + e.dot(&(&model.params().terminal_weight * &e)))
}

/// Cost along `path` against the realized average of the other agents.
///
/// Uses the centralized state `X†` when the path carries one, since that is the
/// state the realized average drives; otherwise `X`.
pub fn evaluate_cost(path: &AgentPath, others_avg: &VectorPath, model: &ValidatedModel) -> Result<f64> {
    let grid = model.grid();
    let state = path.xdag.as_ref().unwrap_or(&path.x);
    state.ensure_grid(grid, "state")?;
    path.u.ensure_grid(grid, "u")?;
    others_avg.ensure_grid(grid, "control average")?;
    Ok(quadratic_cost(
        model,
        |k| state.at(k),
        |k| path.u.at(k),
        |k| others_avg.at(k),
    ))
}

/// Cost of the limiting problem: decentralized state `X*` and the frozen `m`.
pub fn evaluate_limiting_cost(path: &AgentPath, m: &VectorPath, model: &ValidatedModel) -> Result<f64> {
    let grid = model.grid();
    path.x.ensure_grid(grid, "X")?;
    path.u.ensure_grid(grid, "u")?;
    m.ensure_grid(grid, "m")?;
    Ok(quadratic_cost(model, |k| path.x.at(k), |k| path.u.at(k), |k| m.at(k)))
}

/// Both passes of the simulation, before any summarizing.
pub(crate) struct RawPopulation {
    pub agents: Vec<Trajectory>,
    /// Realized `u^(N,-i)` per agent and node.
    pub avg: Vec<Vec<DVector<f64>>>,
    /// `X† − X*` per agent and node.
    pub delta: Vec<Vec<DVector<f64>>>,
}

impl RawPopulation {
    pub fn xdag(&self, i: usize, k: usize) -> DVector<f64> {
        &self.agents[i].x[k] + &self.delta[i][k]
    }
}

pub(crate) fn simulate_raw(plan: &Plan<'_>, seed: u64, streams: &[u64]) -> Result<RawPopulation> {
    let n_agents = streams.len();
    if n_agents < 2 {
        return Err(Error::ConfigMismatch(format!(
            "need at least 2 agents, got {n_agents}"
        )));
    }
    let agents = streams
        .par_iter()
        .map(|&s| trajectory(plan, seed, s))
        .collect::<Result<Vec<_>>>()?;

    // Sum controls in ascending stream order so that relabelling agents cannot
    // change the floating-point result.
    let mut order: Vec<usize> = (0..n_agents).collect();
    order.sort_by_key(|&i| streams[i]);
    let len = plan.n_steps() + 1;
    let k_dim = plan.model.dims().k;
    let totals: Vec<DVector<f64>> = (0..len)
        .map(|k| {
            let mut s = DVector::zeros(k_dim);
            for &i in &order {
                s += &agents[i].u[k];
            }
            s
        })
        .collect();
    let denom = (n_agents - 1) as f64;
    let model = plan.model;
    let dt = plan.dt;
    let (avg, delta): (Vec<_>, Vec<_>) = agents
        .par_iter()
        .map(|a| {
            let avg: Vec<DVector<f64>> = (0..len).map(|k| (&totals[k] - &a.u[k]) / denom).collect();
            let mut delta = Vec::with_capacity(len);
            let mut d = DVector::zeros(model.dims().n);
            for (k, (avg_k, m_k)) in avg.iter().zip(plan.m).enumerate() {
                delta.push(d.clone());
                if k + 1 < len {
                    let c = model.node(k);
                    let step = &c.a * &d + &c.b_tilde * (avg_k - m_k);
                    d.axpy(dt, &step, 1.0);
                }
            }
            (avg, delta)
        })
        .unzip();
    Ok(RawPopulation { agents, avg, delta })
}

/// Simulate `cfg.n_agents` agents on noise streams `0..N`.
pub fn simulate_population(
    model: &ValidatedModel,
    p: &MatrixPath,
    pi: &MatrixPath,
    cc: &CCSolution,
    cfg: &SimConfig,
) -> Result<PopulationResult> {
    let streams: Vec<u64> = (0..cfg.n_agents as u64).collect();
    simulate_population_on_streams(model, p, pi, cc, cfg, &streams)
}

/// As [`simulate_population`], with agent `i` driven by noise stream `streams[i]`.
pub fn simulate_population_on_streams(
    model: &ValidatedModel,
    p: &MatrixPath,
    pi: &MatrixPath,
    cc: &CCSolution,
    cfg: &SimConfig,
    streams: &[u64],
) -> Result<PopulationResult> {
    if &cfg.grid != model.grid() {
        return Err(Error::ConfigMismatch(
            "simulation grid differs from the model grid".into(),
        ));
    }
    if streams.len() != cfg.n_agents {
        return Err(Error::ConfigMismatch(format!(
            "{} noise streams for {} agents",
            streams.len(),
            cfg.n_agents
        )));
    }
    let mut sorted = streams.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != streams.len() {
        return Err(Error::ConfigMismatch("noise streams must be distinct".into()));
    }
    let plan = Plan::new(model, p, pi, cc)?;
    let raw = simulate_raw(&plan, cfg.seed, streams)?;
    summarize(&plan, cc, raw, cfg)
}

fn summarize(
    plan: &Plan<'_>,
    cc: &CCSolution,
    raw: RawPopulation,
    cfg: &SimConfig,
) -> Result<PopulationResult> {
    let model = plan.model;
    let grid = *model.grid();
    let len = grid.len();
    let n_agents = raw.agents.len();
    let nf = n_agents as f64;

    let (costs, limiting_costs): (Vec<f64>, Vec<f64>) = (0..n_agents)
        .map(|i| {
            let a = &raw.agents[i];
            let xdag: Vec<DVector<f64>> = (0..len).map(|k| raw.xdag(i, k)).collect();
            let actual = quadratic_cost(model, |k| &xdag[k], |k| &a.u[k], |k| &raw.avg[i][k]);
            let limiting = quadratic_cost(model, |k| &a.x[k], |k| &a.u[k], |k| &plan.m[k]);
            (actual, limiting)
        })
        .unzip();

    let mut state_gap_curve = vec![0.0; len];
    let mut avg_gap_curve = vec![0.0; len];
    for i in 0..n_agents {
        for k in 0..len {
            state_gap_curve[k] += raw.delta[i][k].norm_squared() / nf;
            avg_gap_curve[k] += (&raw.avg[i][k] - &plan.m[k]).norm_squared() / nf;
        }
    }
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);

    let last = grid.n_steps();
    let mut xhat_total = DVector::zeros(model.dims().n);
    for a in &raw.agents {
        xhat_total += &a.xhat[last];
    }
    let filter_mean_gap_terminal = raw
        .agents
        .iter()
        .map(|a| ((&xhat_total - &a.xhat[last]) / (nf - 1.0) - cc.x.at(last)).norm_squared())
        .sum::<f64>()
        / nf;

    let diffs: Vec<f64> = costs.iter().zip(&limiting_costs).map(|(j, l)| j - l).collect();
    let gap_metrics = GapMetrics {
        state_gap_sup: sup(&state_gap_curve),
        cost_gap: (diffs.iter().sum::<f64>() / nf).abs(),
        cost_gap_max: diffs.iter().map(|d| d.abs()).fold(0.0, f64::max),
        avg_gap_sup: sup(&avg_gap_curve),
        filter_mean_gap_terminal,
    };

    let control_avg = VectorPath::new(grid, raw.avg[0].clone())?;
    let agents = if cfg.record_paths {
        (0..n_agents)
            .map(|i| {
                let a = &raw.agents[i];
                let xdag = (0..len).map(|k| raw.xdag(i, k)).collect();
                Ok(AgentPath {
                    x: VectorPath::new(grid, a.x.clone())?,
                    xhat: VectorPath::new(grid, a.xhat.clone())?,
                    u: VectorPath::new(grid, a.u.clone())?,
                    v: VectorPath::new(grid, a.v.clone())?,
                    xdag: Some(VectorPath::new(grid, xdag)?),
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    Ok(PopulationResult {
        agents,
        control_avg,
        costs,
        limiting_costs,
        gap_metrics,
        state_gap_curve,
        avg_gap_curve,
    })
}

/// Sample statistics of the filtering error `X − X̂` over independent agents.
#[derive(Clone, Debug, Serialize)]
pub struct FilterErrorStats {
    pub n_agents: usize,
    pub times: Vec<f64>,
    pub mean_error: Vec<Vec<f64>>,
    /// Standard error of `mean_error`, per component.
    pub mean_error_se: Vec<Vec<f64>>,
    /// Sample covariance, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// `Π(t)`, row-major.
    pub pi: Vec<Vec<f64>>,
    /// `‖cov − Π‖_F / ‖Π‖_F`
    pub relative_error: Vec<f64>,
    /// Per component, mean over agents of `Σ_k (dŴ_k)² / T`.
    pub innovation_ratio: Vec<f64>,
}

/// Simulate `n_agents` independent agents and compare the error statistics with `Π`.
pub fn filter_error_statistics(eq: &Equilibrium, n_agents: usize, seed: u64, times: &[f64]) -> Result<FilterErrorStats> {
    if n_agents < 2 {
        return Err(Error::InvalidArgument("need at least 2 agents".into()));
    }
    let model = &eq.model;
    let grid = model.grid();
    let nodes = times
        .iter()
        .map(|&t| grid.index_at(t))
        .collect::<Result<Vec<_>>>()?;
    let plan = Plan::new(model, &eq.p, &eq.pi, &eq.cc)?;
    let n = model.dims().n;
    let dt = plan.dt;

    struct AgentSummary {
        errors: Vec<DVector<f64>>,
        innovation_ss: DVector<f64>,
    }
    let summaries = (0..n_agents as u64)
        .into_par_iter()
        .map(|stream| {
            let mut errors = vec![DVector::zeros(n); nodes.len()];
            let mut ss = DVector::zeros(n);
            run_agent(&plan, seed, stream, |view| {
                for (slot, &node) in nodes.iter().enumerate() {
                    if node == view.k {
                        errors[slot] = view.x - view.xhat;
                    }
                }
                if let Some(dv) = view.dv {
                    let c = model.node(view.k);
                    let innov = &c.h_inv * (dv - (&c.f * view.xhat + &c.g) * dt);
                    ss += innov.component_mul(&innov);
                }
            })?;
            Ok(AgentSummary {
                errors,
                innovation_ss: ss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mf = n_agents as f64;
    let mut mean_error = Vec::new();
    let mut mean_error_se = Vec::new();
    let mut covariance = Vec::new();
    let mut pi = Vec::new();
    let mut relative_error = Vec::new();
    for (slot, &node) in nodes.iter().enumerate() {
        let mut mean = DVector::zeros(n);
        for s in &summaries {
            mean += &s.errors[slot];
        }
        mean /= mf;
        let mut cov = DMatrix::zeros(n, n);
        for s in &summaries {
            let d = &s.errors[slot] - &mean;
            cov += &d * d.transpose();
        }
        cov /= mf - 1.0;
        let pi_t = eq.pi.at(node);
        let rel = (&cov - pi_t).norm() / pi_t.norm();
        mean_error_se.push((0..n).map(|i| (cov[(i, i)] / mf).sqrt()).collect());
        mean_error.push(mean.iter().copied().collect());
        covariance.push(cov.transpose().iter().copied().collect());
        pi.push(pi_t.transpose().iter().copied().collect());
        relative_error.push(rel);
    }
    let mut ratio = DVector::zeros(n);
    for s in &summaries {
        ratio += &s.innovation_ss;
    }
    ratio /= mf * grid.horizon();

    Ok(FilterErrorStats {
        n_agents,
        times: nodes.iter().map(|&k| grid.node(k)).collect(),
        mean_error,
        mean_error_se,
        covariance,
        pi,
        relative_error,
        innovation_ratio: ratio.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cash::cash_default_params;
    use crate::model::tests::scalar_params;
    use crate::model::{validate, AffineCost, Coefficient};

    fn cash_eq(n_steps: usize) -> Equilibrium {
        let params = cash_default_params().with_steps(n_steps).unwrap();
        Equilibrium::solve(validate(params).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_agents_are_identical() {
        let mut params = scalar_params(0.3, 1.0, 0.5, 0.0, 1.0, 1.0);
        params.affine = Some(AffineCost {
            benchmark: Coefficient::scalar(0.5),
            terminal_target: DVector::from_element(1, 2.0),
        });
        let eq = Equilibrium::solve(validate(params).unwrap()).unwrap();
        let cfg = SimConfig::new(2, 9, *eq.model.grid()).recording();
        let res = eq.simulate(&cfg).unwrap();
        let (a, b) = (&res.agents[0], &res.agents[1]);
        assert_eq!(a.x, b.x);
        assert_eq!(a.u, b.u);
        assert_eq!(res.control_avg, a.u);
        assert_eq!(a.x, a.xhat);
        // Euler against RK4: u and m differ by O(dt), and that mismatch alone drives
        // |Δ| ≤ b̃ T e^{aT} sup|u − m|.
        let mismatch = a.u.max_abs_diff(&eq.cc.m).unwrap();
        assert!(mismatch < 2e-2, "mismatch {mismatch}");
        let bound = 0.5 * 0.3f64.exp() * mismatch;
        assert!(res.gap_metrics.state_gap_sup <= bound * bound);
    }

    #[test]
    fn zero_model_has_zero_cost() {
        let vm = validate(scalar_params(0.0, 1.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        let g = *vm.grid();
        let zero = VectorPath::zeros(g, 1);
        let path = AgentPath {
            x: zero.clone(),
            xhat: zero.clone(),
            u: zero.clone(),
            v: zero.clone(),
            xdag: None,
        };
        assert_eq!(evaluate_cost(&path, &zero, &vm).unwrap(), 0.0);
        assert_eq!(evaluate_limiting_cost(&path, &zero, &vm).unwrap(), 0.0);
    }

    #[test]
    fn constant_control_cost() {
        let mut params = scalar_params(0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        params.grid = TimeGrid::new(3.0, 300).unwrap();
        let vm = validate(params).unwrap();
        let g = *vm.grid();
        let c = 1.7;
        let path = AgentPath {
            x: VectorPath::constant(g, DVector::from_element(1, 5.0)),
            xhat: VectorPath::zeros(g, 1),
            u: VectorPath::constant(g, DVector::from_element(1, c)),
            v: VectorPath::zeros(g, 1),
            xdag: None,
        };
        let j = evaluate_cost(&path, &VectorPath::zeros(g, 1), &vm).unwrap();
        assert!((j - c * c * 3.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn limiting_cost_equals_cost_against_m() {
        let eq = cash_eq(200);
        let cfg = SimConfig::new(3, 5, *eq.model.grid()).recording();
        let res = eq.simulate(&cfg).unwrap();
        let mut path = res.agents[0].clone();
        path.xdag = None;
        assert_eq!(
            evaluate_cost(&path, &eq.cc.m, &eq.model).unwrap(),
            evaluate_limiting_cost(&path, &eq.cc.m, &eq.model).unwrap()
        );
        assert_eq!(res.limiting_costs[0], evaluate_limiting_cost(&path, &eq.cc.m, &eq.model).unwrap());
        let actual = evaluate_cost(&res.agents[0], &res.control_avg, &eq.model).unwrap();
        assert_eq!(actual, res.costs[0]);
    }

    #[test]
    fn deterministic_under_seed() {
        let eq = cash_eq(200);
        let cfg = SimConfig::new(5, 42, *eq.model.grid()).recording();
        let a = eq.simulate(&cfg).unwrap();
        let b = eq.simulate(&cfg).unwrap();
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.costs, b.costs);
        assert_eq!(a.gap_metrics, b.gap_metrics);
        let c = eq.simulate(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.costs, c.costs);
    }

    #[test]
    fn paths_start_at_initial_data() {
        let eq = cash_eq(100);
        let res = eq.simulate(&SimConfig::new(2, 1, *eq.model.grid()).recording()).unwrap();
        for a in &res.agents {
            assert_eq!(a.x.first()[0], 3.5);
            assert_eq!(a.xhat.first()[0], 3.5);
            assert_eq!(a.v.first()[0], 0.0);
            assert_eq!(a.xdag.as_ref().unwrap().first()[0], 3.5);
        }
    }

    #[test]
    fn config_errors() {
        let eq = cash_eq(100);
        let g = *eq.model.grid();
        assert!(matches!(eq.simulate(&SimConfig::new(1, 0, g)), Err(Error::ConfigMismatch(_))));
        let other = TimeGrid::new(10.0, 50).unwrap();
        assert!(matches!(eq.simulate(&SimConfig::new(4, 0, other)), Err(Error::ConfigMismatch(_))));
        let cfg = SimConfig::new(2, 0, g);
        assert!(simulate_population_on_streams(&eq.model, &eq.p, &eq.pi, &eq.cc, &cfg, &[3, 3]).is_err());
    }
}
