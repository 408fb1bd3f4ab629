//! Empirical ε-Nash diagnostics: gap scaling in `N`, unilateral deviations and
//! first-order stationarity of the limiting cost.
//!
//! Deviations are open-loop add-ons: the deviating agent plays its realized
//! equilibrium control plus a deterministic (or control-proportional)
//! perturbation `δ`. Its state then shifts by `s`, with
//! `s_{k+1} = s_k + (A s_k + B δ_k) dt`, while the other agents and therefore
//! the realized average are unchanged.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::noise::derive_seed;
use crate::population::{quadratic_cost, simulate_raw, trajectory, Equilibrium, Plan, SimConfig};

/// Gaps below this are treated as exactly zero.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Ordinary least squares fit of `ln(metric)` against `ln(N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when some metric is not positive, so no log-log fit exists.
    pub degenerate: bool,
}

impl SlopeFit {
    pub fn fit(ns: &[usize], values: &[f64]) -> Self {
        let degenerate = SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            degenerate: true,
        };
        if ns.len() != values.len() || ns.len() < 2 || values.iter().any(|&v| v.is_nan() || v <= DEGENERATE_GAP) {
            return degenerate;
        }
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let len = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / len;
        let my = ys.iter().sum::<f64>() / len;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let (ci_low, ci_high) = if xs.len() > 2 {
            let ssr: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            let df = len - 2.0;
            let se = (ssr / df / sxx).sqrt();
            let t = StudentsT::new(0.0, 1.0, df)
                .map(|d| d.inverse_cdf(0.975))
                .unwrap_or(f64::INFINITY);
            (slope - t * se, slope + t * se)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        SlopeFit {
            slope,
            intercept,
            ci_low,
            ci_high,
            degenerate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCell {
    pub n_agents: usize,
    pub replicate: usize,
    pub seed: u64,
    pub state_gap: f64,
    pub cost_gap: f64,
    pub avg_gap: f64,
    /// `mean_i (J_i − J̄_i)`, signed.
    pub cost_diff: f64,
    pub filter_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingSlopes {
    pub state_gap: SlopeFit,
    pub cost_gap: SlopeFit,
    pub avg_gap: SlopeFit,
    pub filter_gap: SlopeFit,
}

/// Gap metrics against `N`, each aggregated over replicates before fitting.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub ns: Vec<usize>,
    /// Seed of each replicate; replicate `r` uses the same seed for every `N`.
    pub replicates: Vec<u64>,
    /// `sup_t` of the replicate-averaged `mean_i |X† − X*|²`.
    pub state_gap: Vec<f64>,
    /// `|mean_r mean_i (J_i − J̄_i)|`
    pub cost_gap: Vec<f64>,
    /// `sup_t` of the replicate-averaged `mean_i |u^(N,-i) − m|²`.
    pub avg_gap: Vec<f64>,
    /// Replicate mean of `mean_i |mean_{j≠i} X̂_j(T) − X(T)|²`.
    pub filter_gap: Vec<f64>,
    pub cells: Vec<ScalingCell>,
    pub slopes: ScalingSlopes,
}

pub fn scaling_sweep(eq: &Equilibrium, ns: &[usize], replicates: usize, seed: u64) -> Result<ScalingReport> {
    if ns.is_empty() || ns[0] < 2 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "agent counts must be strictly increasing and at least 2".into(),
        ));
    }
    if replicates < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 replicates, got {replicates}"
        )));
    }
    let seeds: Vec<u64> = (0..replicates as u64).map(|r| derive_seed(seed, r)).collect();
    let jobs: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| (0..replicates).map(move |r| (n, r)))
        .collect();
    let grid = *eq.model.grid();
    let runs = jobs
        .par_iter()
        .map(|&(n, r)| eq.simulate(&SimConfig::new(n, seeds[r], grid)).map(|res| (n, r, res)))
        .collect::<Result<Vec<_>>>()?;

    let len = grid.len();
    let mut state_gap = Vec::new();
    let mut cost_gap = Vec::new();
    let mut avg_gap = Vec::new();
    let mut filter_gap = Vec::new();
    let mut cells = Vec::new();
    for (idx, &n) in ns.iter().enumerate() {
        let group = &runs[idx * replicates..(idx + 1) * replicates];
        let rf = replicates as f64;
        let mut state_curve = vec![0.0; len];
        let mut avg_curve = vec![0.0; len];
        let mut diff = 0.0;
        let mut fgap = 0.0;
        for (_, r, res) in group {
            for k in 0..len {
                state_curve[k] += res.state_gap_curve[k] / rf;
                avg_curve[k] += res.avg_gap_curve[k] / rf;
            }
            let d = res
                .costs
                .iter()
                .zip(&res.limiting_costs)
                .map(|(j, l)| j - l)
                .sum::<f64>()
                / n as f64;
            diff += d / rf;
            fgap += res.gap_metrics.filter_mean_gap_terminal / rf;
            cells.push(ScalingCell {
                n_agents: n,
                replicate: *r,
                seed: seeds[*r],
                state_gap: res.gap_metrics.state_gap_sup,
                cost_gap: res.gap_metrics.cost_gap,
                avg_gap: res.gap_metrics.avg_gap_sup,
                cost_diff: d,
                filter_gap: res.gap_metrics.filter_mean_gap_terminal,
            });
        }
        let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        state_gap.push(sup(&state_curve));
        avg_gap.push(sup(&avg_curve));
        cost_gap.push(diff.abs());
        filter_gap.push(fgap);
    }
    let slopes = ScalingSlopes {
        state_gap: SlopeFit::fit(ns, &state_gap),
        cost_gap: SlopeFit::fit(ns, &cost_gap),
        avg_gap: SlopeFit::fit(ns, &avg_gap),
        filter_gap: SlopeFit::fit(ns, &filter_gap),
    };
    Ok(ScalingReport {
        ns: ns.to_vec(),
        replicates: seeds,
        state_gap,
        cost_gap,
        avg_gap,
        filter_gap,
        cells,
        slopes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    /// `sin²` bump vanishing at both ends of the support.
    Bump,
    Constant,
    /// Proportional to the agent's own equilibrium control.
    Scaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Perturbation {
    pub shape: PerturbationShape,
    pub magnitude: f64,
    /// Closed time interval on which `δ` is nonzero.
    pub support: (f64, f64),
}

impl Perturbation {
    pub fn constant(magnitude: f64, horizon: f64) -> Self {
        Self {
            shape: PerturbationShape::Constant,
            magnitude,
            support: (0.0, horizon),
        }
    }

    fn at(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.support;
        if t < a || t > b {
            return DVector::zeros(u.len());
        }
        match self.shape {
            PerturbationShape::Constant => DVector::from_element(u.len(), self.magnitude),
            PerturbationShape::Bump => {
                let s = (std::f64::consts::PI * (t - a) / (b - a)).sin();
                DVector::from_element(u.len(), self.magnitude * s * s)
            }
            PerturbationShape::Scaled => u * self.magnitude,
        }
    }
}

/// `{constant ±0.1, ±0.5, ±1}` on `[0, T]`.
pub fn default_perturbations(horizon: f64) -> Vec<Perturbation> {
    [0.1, -0.1, 0.5, -0.5, 1.0, -1.0]
        .into_iter()
        .map(|c| Perturbation::constant(c, horizon))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationResult {
    /// Agent-averaged `J_i(u*_i, u*_{-i})`.
    pub base_cost: f64,
    /// Agent-averaged cost when that agent alone deviates.
    pub deviated_costs: Vec<f64>,
    /// `max(0, base_cost − min deviated_costs)`
    pub epsilon_hat: f64,
    pub base_limiting_cost: f64,
    pub deviated_limiting_costs: Vec<f64>,
}

/// State shift `s` produced by the control change `δ`.
fn shift(model: &ValidatedModel, du: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let dt = model.grid().dt();
    let mut s = DVector::zeros(model.dims().n);
    let mut out = Vec::with_capacity(du.len());
    for (k, d) in du.iter().enumerate() {
        out.push(s.clone());
        if k + 1 < du.len() {
            let c = model.node(k);
            let step = &c.a * &s + &c.b * d;
            s.axpy(dt, &step, 1.0);
        }
    }
    out
}

/// Each agent in turn deviates alone, with every other agent on its equilibrium
/// control; costs are averaged over the deviating agent.
pub fn best_response_deviation(
    eq: &Equilibrium,
    n_agents: usize,
    perturbations: &[Perturbation],
    seed: u64,
) -> Result<DeviationResult> {
    for p in perturbations {
        if !p.magnitude.is_finite() || p.support.0.is_nan() || p.support.1.is_nan() || p.support.0 > p.support.1 {
            return Err(Error::InvalidArgument(format!("bad perturbation {p:?}")));
        }
    }
    let model = &eq.model;
    let grid = *model.grid();
    let plan = Plan::new(model, &eq.p, &eq.pi, &eq.cc)?;
    let streams: Vec<u64> = (0..n_agents as u64).collect();
    let raw = simulate_raw(&plan, seed, &streams)?;
    let len = grid.len();

    let zero = Perturbation {
        shape: PerturbationShape::Constant,
        magnitude: 0.0,
        support: (0.0, grid.horizon()),
    };
    let all: Vec<Perturbation> = std::iter::once(zero).chain(perturbations.iter().copied()).collect();

    // per agent: (actual, limiting) cost for each perturbation
    let per_agent: Vec<Vec<(f64, f64)>> = (0..n_agents)
        .into_par_iter()
        .map(|i| {
            let a = &raw.agents[i];
            let xdag: Vec<DVector<f64>> = (0..len).map(|k| raw.xdag(i, k)).collect();
            all.iter()
                .map(|p| {
                    let du: Vec<DVector<f64>> = (0..len).map(|k| p.at(grid.node(k), &a.u[k])).collect();
                    let s = shift(model, &du);
                    let u: Vec<DVector<f64>> = (0..len).map(|k| &a.u[k] + &du[k]).collect();
                    let xd: Vec<DVector<f64>> = (0..len).map(|k| &xdag[k] + &s[k]).collect();
                    let xs: Vec<DVector<f64>> = (0..len).map(|k| &a.x[k] + &s[k]).collect();
                    let actual = quadratic_cost(model, |k| &xd[k], |k| &u[k], |k| &raw.avg[i][k]);
                    let limiting = quadratic_cost(model, |k| &xs[k], |k| &u[k], |k| &plan.m[k]);
                    (actual, limiting)
                })
                .collect()
        })
        .collect();

    let nf = n_agents as f64;
    let mean = |j: usize, pick: fn(&(f64, f64)) -> f64| per_agent.iter().map(|v| pick(&v[j])).sum::<f64>() / nf;
    let base_cost = mean(0, |v| v.0);
    let base_limiting_cost = mean(0, |v| v.1);
    let deviated_costs: Vec<f64> = (1..all.len()).map(|j| mean(j, |v| v.0)).collect();
    let deviated_limiting_costs: Vec<f64> = (1..all.len()).map(|j| mean(j, |v| v.1)).collect();
    let best = deviated_costs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DeviationResult {
        base_cost,
        epsilon_hat: (base_cost - best).max(0.0),
        deviated_costs,
        base_limiting_cost,
        deviated_limiting_costs,
    })
}

/// A direction in control space: scalar profile per grid node, applied to every
/// control component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestDirection {
    pub name: String,
    pub profile: Vec<f64>,
}

/// Constant, ramp `t/T`, `sin(πt/T)`, and indicators of the first and second half.
pub fn default_directions(model: &ValidatedModel) -> Vec<TestDirection> {
    let grid = model.grid();
    let horizon = grid.horizon();
    let make = |name: &str, f: &dyn Fn(f64) -> f64| TestDirection {
        name: name.to_string(),
        profile: grid.nodes().map(f).collect(),
    };
    vec![
        make("constant", &|_| 1.0),
        make("ramp", &|t| t / horizon),
        make("sine", &|t| (std::f64::consts::PI * t / horizon).sin()),
        make("early", &|t| if t <= 0.5 * horizon { 1.0 } else { 0.0 }),
        make("late", &|t| if t >= 0.5 * horizon { 1.0 } else { 0.0 }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationarityReport {
    pub directions: Vec<String>,
    /// Central-difference Gateaux derivatives of the mean limiting cost.
    pub derivatives: Vec<f64>,
    pub max_abs_derivative: f64,
    /// Mean limiting cost at `u*`.
    pub cost_scale: f64,
    pub step: f64,
    pub n_paths: usize,
}

/// Step of the central difference.
pub const STATIONARITY_STEP: f64 = 1e-4;

/// Gateaux derivative of the limiting cost at `u*` in the default directions.
pub fn stationarity_check(eq: &Equilibrium, n_paths: usize, seed: u64) -> Result<StationarityReport> {
    let dirs = default_directions(&eq.model);
    stationarity_check_with(eq, &dirs, n_paths, seed, STATIONARITY_STEP)
}

/// As [`stationarity_check`] with explicit directions and step. Every direction
/// reuses the same simulated paths.
pub fn stationarity_check_with(
    eq: &Equilibrium,
    directions: &[TestDirection],
    n_paths: usize,
    seed: u64,
    step: f64,
) -> Result<StationarityReport> {
    let model = &eq.model;
    let grid = *model.grid();
    let len = grid.len();
    if n_paths == 0 || step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument("need paths and a positive step".into()));
    }
    for d in directions {
        if d.profile.len() != len {
            return Err(Error::GridMismatch(format!(
                "direction {} has {} values for {} nodes",
                d.name,
                d.profile.len(),
                len
            )));
        }
    }
    let plan = Plan::new(model, &eq.p, &eq.pi, &eq.cc)?;
    let k_dim = model.dims().k;
    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|stream| {
            let a = trajectory(&plan, seed, stream)?;
            let base = quadratic_cost(model, |k| &a.x[k], |k| &a.u[k], |k| &plan.m[k]);
            let derivs: Vec<f64> = directions
                .iter()
                .map(|d| {
                    let cost = |h: f64| {
                        let du: Vec<DVector<f64>> = d
                            .profile
                            .iter()
                            .map(|&v| DVector::from_element(k_dim, h * v))
                            .collect();
                        let s = shift(model, &du);
                        let u: Vec<DVector<f64>> = (0..len).map(|k| &a.u[k] + &du[k]).collect();
                        let x: Vec<DVector<f64>> = (0..len).map(|k| &a.x[k] + &s[k]).collect();
                        quadratic_cost(model, |k| &x[k], |k| &u[k], |k| &plan.m[k])
                    };
                    (cost(step) - cost(-step)) / (2.0 * step)
                })
                .collect();
            Ok((base, derivs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mf = n_paths as f64;
    let cost_scale = per_path.iter().map(|p| p.0).sum::<f64>() / mf;
    let derivatives: Vec<f64> = (0..directions.len())
        .map(|j| per_path.iter().map(|p| p.1[j]).sum::<f64>() / mf)
        .collect();
    Ok(StationarityReport {
        directions: directions.iter().map(|d| d.name.clone()).collect(),
        max_abs_derivative: derivatives.iter().map(|d| d.abs()).fold(0.0, f64::max),
        derivatives,
        cost_scale,
        step,
        n_paths,
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
    fn slope_of_exact_power_law() {
        let ns = [4, 8, 16, 32];
        let vals: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let fit = SlopeFit::fit(&ns, &vals);
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!(fit.ci_high - fit.ci_low < 1e-9);
        assert!(!fit.degenerate);
        assert!(SlopeFit::fit(&ns, &[0.0; 4]).degenerate);
    }

    #[test]
    fn zero_perturbation_replays_exactly() {
        let eq = cash_eq(200);
        let zero = Perturbation::constant(0.0, 10.0);
        let res = best_response_deviation(&eq, 6, &[zero], 11).unwrap();
        assert_eq!(res.deviated_costs[0], res.base_cost);
        assert_eq!(res.deviated_limiting_costs[0], res.base_limiting_cost);
        assert_eq!(res.epsilon_hat, 0.0);
        // Base cost is the population's own cost.
        let pop = eq.simulate(&SimConfig::new(6, 11, *eq.model.grid())).unwrap();
        let mean = pop.costs.iter().sum::<f64>() / 6.0;
        assert!((mean - res.base_cost).abs() <= 1e-9 * mean.abs());
    }

    #[test]
    fn epsilon_is_nonnegative() {
        let eq = cash_eq(200);
        let res = best_response_deviation(&eq, 5, &default_perturbations(10.0), 3).unwrap();
        assert!(res.epsilon_hat >= 0.0);
        assert_eq!(res.deviated_costs.len(), 6);
    }

    /// Noise-free model: the equilibrium control is optimal for the limiting problem,
    /// so every perturbation raises the limiting cost.
    #[test]
    fn limiting_cost_is_convex_at_optimum() {
        let mut params = scalar_params(0.5, 0.2, 0.5, 0.0, 0.0, 1.0);
        params.grid = crate::grid::TimeGrid::new(10.0, 2000).unwrap();
        params.affine = Some(AffineCost {
            benchmark: Coefficient::scalar(15.0),
            terminal_target: DVector::from_element(1, 3.0),
        });
        params.x0 = DVector::from_element(1, 3.5);
        let eq = Equilibrium::solve(validate(params).unwrap()).unwrap();
        let h = 10.0;
        let perts = vec![
            Perturbation::constant(0.1, h),
            Perturbation::constant(-0.1, h),
            Perturbation {
                shape: PerturbationShape::Bump,
                magnitude: 0.5,
                support: (2.0, 6.0),
            },
            Perturbation {
                shape: PerturbationShape::Scaled,
                magnitude: -0.05,
                support: (0.0, h),
            },
        ];
        let res = best_response_deviation(&eq, 2, &perts, 0).unwrap();
        for c in &res.deviated_limiting_costs {
            assert!(*c > res.base_limiting_cost, "{c} vs {}", res.base_limiting_cost);
        }
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let eq = cash_eq(200);
        let dirs = vec![TestDirection {
            name: "zero".into(),
            profile: vec![0.0; eq.model.grid().len()],
        }];
        let rep = stationarity_check_with(&eq, &dirs, 4, 1, 1e-4).unwrap();
        assert_eq!(rep.derivatives, vec![0.0]);
    }

    #[test]
    fn homogeneous_model_is_stationary() {
        let eq = Equilibrium::solve(validate(scalar_params(0.3, 1.0, 0.5, 1.0, 0.0, 0.0)).unwrap()).unwrap();
        let rep = stationarity_check(&eq, 8, 2).unwrap();
        assert!(rep.max_abs_derivative < 1e-9, "{rep:?}");
        assert_eq!(rep.derivatives.len(), 5);
    }

    #[test]
    fn sweep_validates_arguments() {
        let eq = cash_eq(100);
        assert!(scaling_sweep(&eq, &[4, 4], 3, 0).is_err());
        assert!(scaling_sweep(&eq, &[1, 4], 3, 0).is_err());
        assert!(scaling_sweep(&eq, &[2, 4], 2, 0).is_err());
    }

    #[test]
    fn noiseless_sweep_is_degenerate() {
        let mut params = scalar_params(0.3, 1.0, 0.5, 0.0, 0.0, 0.0);
        params.affine = None;
        let eq = Equilibrium::solve(validate(params).unwrap()).unwrap();
        let rep = scaling_sweep(&eq, &[2, 4, 8], 3, 5).unwrap();
        assert!(rep.state_gap.iter().all(|&g| g < DEGENERATE_GAP));
        assert!(rep.slopes.state_gap.degenerate);
        assert!(rep.slopes.avg_gap.degenerate);
    }
}
