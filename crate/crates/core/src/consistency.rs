//! Consistency condition for the control-average limit `m`.
//!
//! With `L = (I − K)⁻¹` and `E = (B K + B̃) L`, eliminating `m` gives the
//! forward-backward system
//!
//! ```text
//! Ẋ = A_X X − D ψ + f_X,                     X(0) = x0
//! ψ̇ = −A_ψ ψ − C X − P f_X,                  ψ(T) = −M l
//! m = L (−R⁻¹Bᵀ(P X + ψ) + r)
//! ```
//!
//! where `A_X = A − (B + E) R⁻¹BᵀP`, `D = (B + E) R⁻¹Bᵀ`,
//! `A_ψ = Aᵀ − P (B + E) R⁻¹Bᵀ`, `C = −P E R⁻¹BᵀP` and `f_X = (B + E) r`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NodeCoefficients, ValidatedModel};
use crate::ode::{integrate_matrix_ode, integrate_vector_ode, Direction};
use crate::path::{MatrixPath, VectorPath};
use crate::riccati::solve_psi;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CCMethod {
    Decoupled,
    FixedPoint,
}

/// Max-norm defects of the consistency system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CCResidual {
    pub forward_res: f64,
    pub backward_res: f64,
    pub m_res: f64,
}

#[derive(Clone, Debug)]
pub struct CCSolution {
    /// Mean filtered state.
    pub x: VectorPath,
    pub psi: VectorPath,
    pub m: VectorPath,
    pub residual: CCResidual,
    pub method: CCMethod,
    /// `Γ` of `ψ = Γ X + Λ`, decoupled method only.
    pub gamma: Option<MatrixPath>,
    pub lambda: Option<VectorPath>,
    /// Fixed-point iterations, zero for the decoupled method.
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            damping: 0.5,
        }
    }
}

/// Coefficient blocks at one time.
struct Blocks {
    a_x: DMatrix<f64>,
    d: DMatrix<f64>,
    a_psi: DMatrix<f64>,
    c: DMatrix<f64>,
    f_x: DVector<f64>,
}

fn blocks(c: &NodeCoefficients, p: &DMatrix<f64>) -> Blocks {
    let b_plus_e = &c.b + &c.coupling;
    let d = &b_plus_e * &c.r_inv_bt;
    let gain = &c.r_inv_bt * p;
    Blocks {
        a_x: &c.a - &b_plus_e * &gain,
        a_psi: c.a.transpose() - p * &d,
        c: -(p * &c.coupling * &gain),
        f_x: &b_plus_e * &c.benchmark,
        d,
    }
}

/// `m = L (−R⁻¹Bᵀ(P X + ψ) + r)`
fn control_average(
    model: &ValidatedModel,
    c: &NodeCoefficients,
    p: &DMatrix<f64>,
    x: &DVector<f64>,
    psi: &DVector<f64>,
) -> DVector<f64> {
    model.i_minus_k_inv() * (&c.benchmark - &c.r_inv_bt * (p * x + psi))
}

fn m_from_states(
    model: &ValidatedModel,
    p: &MatrixPath,
    x: &VectorPath,
    psi: &VectorPath,
) -> Result<VectorPath> {
    VectorPath::from_fn(*model.grid(), |k| {
        control_average(model, model.node(k), p.at(k), x.at(k), psi.at(k))
    })
}

/// Forward pass `Ẋ = A_X X − D ψ + f_X` for a given `ψ` path.
fn forward_state(model: &ValidatedModel, p_half: &[DMatrix<f64>], psi: &VectorPath) -> Result<VectorPath> {
    let psi_half = psi.half_samples();
    integrate_vector_ode(
        |s, x| {
            let j = s.half_index;
            let bl = blocks(model.node_at_half(j), &p_half[j]);
            &bl.a_x * x - &bl.d * &psi_half[j] + &bl.f_x
        },
        model.params().x0.clone(),
        Direction::Forward,
        model.grid(),
    )
}

fn finish(
    model: &ValidatedModel,
    p: &MatrixPath,
    x: VectorPath,
    psi: VectorPath,
    m: VectorPath,
    method: CCMethod,
) -> Result<CCSolution> {
    let mut sol = CCSolution {
        x,
        psi,
        m,
        residual: CCResidual::default(),
        method,
        gamma: None,
        lambda: None,
        iterations: 0,
    };
    sol.residual = cc_residual(model, p, &sol)?;
    Ok(sol)
}

/// Solve through the ansatz `ψ = Γ X + Λ`:
///
/// ```text
/// Γ̇ + Γ A_X + A_ψ Γ − Γ D Γ + C = 0,            Γ(T) = 0
/// Λ̇ + (A_ψ − Γ D) Λ + (P + Γ) f_X = 0,          Λ(T) = −M l
/// ```
///
/// Falls back to [`solve_cc_fixed_point`] with default options if `Γ` escapes.
pub fn solve_cc_decoupled(model: &ValidatedModel, p: &MatrixPath) -> Result<CCSolution> {
    match decoupled(model, p) {
        Err(Error::Blowup { .. }) => solve_cc_fixed_point(model, p, FixedPointOptions::default()),
        other => other,
    }
}

fn decoupled(model: &ValidatedModel, p: &MatrixPath) -> Result<CCSolution> {
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    let n = model.dims().n;
    let p_half = p.half_samples();

    let gamma = integrate_matrix_ode(
        |s, g| {
            let j = s.half_index;
            let bl = blocks(model.node_at_half(j), &p_half[j]);
            -(g * &bl.a_x + &bl.a_psi * g - g * &bl.d * g + &bl.c)
        },
        DMatrix::zeros(n, n),
        Direction::Backward,
        &grid,
    )?;
    let gamma_half = gamma.half_samples();

    let terminal = -(&model.params().terminal_weight * model.terminal_target());
    let lambda = integrate_vector_ode(
        |s, l| {
            let j = s.half_index;
            let bl = blocks(model.node_at_half(j), &p_half[j]);
            let g = &gamma_half[j];
            -((&bl.a_psi - g * &bl.d) * l + (&p_half[j] + g) * &bl.f_x)
        },
        terminal,
        Direction::Backward,
        &grid,
    )?;
    let lambda_half = lambda.half_samples();

    let x = integrate_vector_ode(
        |s, x| {
            let j = s.half_index;
            let bl = blocks(model.node_at_half(j), &p_half[j]);
            let psi = &gamma_half[j] * x + &lambda_half[j];
            &bl.a_x * x - &bl.d * psi + &bl.f_x
        },
        model.params().x0.clone(),
        Direction::Forward,
        &grid,
    )?;

    let psi = VectorPath::from_fn(grid, |k| gamma.at(k) * x.at(k) + lambda.at(k))?;
    let m = m_from_states(model, p, &x, &psi)?;
    let mut sol = finish(model, p, x, psi, m, CCMethod::Decoupled)?;
    sol.gamma = Some(gamma);
    sol.lambda = Some(lambda);
    Ok(sol)
}

/// Damped Picard iteration on `m`, starting from `m ≡ 0`.
pub fn solve_cc_fixed_point(
    model: &ValidatedModel,
    p: &MatrixPath,
    opts: FixedPointOptions,
) -> Result<CCSolution> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must be in (0, 1], got {}",
            opts.damping
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 || opts.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "tol must be positive and max_iter at least 1".into(),
        ));
    }
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    let p_half = p.half_samples();
    let mut m = VectorPath::zeros(grid, model.dims().k);
    let mut delta = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let psi = solve_psi(model, p, &m)?;
        let x = forward_state(model, &p_half, &psi)?;
        let target = m_from_states(model, p, &x, &psi)?;
        let next = VectorPath::new(
            grid,
            m.values()
                .iter()
                .zip(target.values())
                .map(|(old, new)| old * (1.0 - opts.damping) + new * opts.damping)
                .collect(),
        )?;
        delta = next.max_abs_diff(&m)?;
        m = next;
        if delta < opts.tol {
            let psi = solve_psi(model, p, &m)?;
            let x = forward_state(model, &p_half, &psi)?;
            let mut sol = finish(model, p, x, psi, m, CCMethod::FixedPoint)?;
            sol.iterations = iter;
            return Ok(sol);
        }
        if !delta.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence {
        max_iter: opts.max_iter,
        last_delta: delta,
    })
}

/// Central-difference defects of both ODEs on interior nodes and of the `m` identity on all nodes.
pub fn cc_residual(model: &ValidatedModel, p: &MatrixPath, sol: &CCSolution) -> Result<CCResidual> {
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    sol.x.ensure_grid(&grid, "X")?;
    sol.psi.ensure_grid(&grid, "psi")?;
    sol.m.ensure_grid(&grid, "m")?;
    let two_dt = 2.0 * grid.dt();
    let mut res = CCResidual::default();
    let max_abs = |v: &DVector<f64>| v.amax();
    for k in 0..grid.len() {
        let c = model.node(k);
        let pk = p.at(k);
        let (x, psi) = (sol.x.at(k), sol.psi.at(k));
        let m = control_average(model, c, pk, x, psi);
        res.m_res = res.m_res.max(max_abs(&(&m - sol.m.at(k))));
        if k == 0 || k == grid.n_steps() {
            continue;
        }
        let bl = blocks(c, pk);
        let x_dot = (sol.x.at(k + 1) - sol.x.at(k - 1)) / two_dt;
        let psi_dot = (sol.psi.at(k + 1) - sol.psi.at(k - 1)) / two_dt;
        let fwd = x_dot - (&bl.a_x * x - &bl.d * psi + &bl.f_x);
        let bwd = psi_dot + &bl.a_psi * psi + &bl.c * x + pk * &bl.f_x;
        res.forward_res = res.forward_res.max(max_abs(&fwd));
        res.backward_res = res.backward_res.max(max_abs(&bwd));
    }
    Ok(res)
}

/// Closed-form `m` of the scalar model from `P`, `Γ`, `Λ`:
///
/// ```text
/// κ = a − (P + Γ) d,   d = (b + e) b / R,   e = (b K + b̃) / (1 − K)
/// X(t) = e^{∫κ} (x0 + ∫ (b + e)(r − bΛ/R) e^{−∫κ} ds)
/// m = (−b/R ((P + Γ) X + Λ) + r) / (1 − K)
/// ```
///
/// Integrals by cumulative trapezoid on the grid. With `R = 1`, `K = 0` this is
/// `κ = a − (P + Γ)(b + b̃) b` and `m = −b((P + Γ) X + Λ) + r`.
pub fn explicit_m_cash(
    model: &ValidatedModel,
    p: &MatrixPath,
    gamma: &MatrixPath,
    lambda: &VectorPath,
) -> Result<VectorPath> {
    let dims = model.dims();
    if dims.n != 1 || dims.k != 1 || !model.has_affine() {
        return Err(Error::NotScalarModel);
    }
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    gamma.ensure_grid(&grid, "Gamma")?;
    lambda.ensure_grid(&grid, "Lambda")?;
    let kk = model.params().average_weight[(0, 0)];
    let l_inv = 1.0 / (1.0 - kk);
    let dt = grid.dt();
    let len = grid.len();

    let mut kappa = Vec::with_capacity(len);
    let mut forcing = Vec::with_capacity(len);
    for k in 0..len {
        let c = model.node(k);
        let (a, b, bt, r_inv, r) = (c.a[(0, 0)], c.b[(0, 0)], c.b_tilde[(0, 0)], c.r_inv[(0, 0)], c.benchmark[0]);
        let e = (b * kk + bt) * l_inv;
        let pg = p.at(k)[(0, 0)] + gamma.at(k)[(0, 0)];
        kappa.push(a - pg * (b + e) * b * r_inv);
        forcing.push((b + e) * (r - b * r_inv * lambda.at(k)[0]));
    }
    let mut int_kappa = vec![0.0; len];
    for k in 1..len {
        int_kappa[k] = int_kappa[k - 1] + 0.5 * dt * (kappa[k - 1] + kappa[k]);
    }
    let integrand: Vec<f64> = (0..len).map(|k| forcing[k] * (-int_kappa[k]).exp()).collect();
    let x0 = model.params().x0[0];
    let mut inner = 0.0;
    VectorPath::from_fn(grid, |k| {
        if k > 0 {
            inner += 0.5 * dt * (integrand[k - 1] + integrand[k]);
        }
        let c = model.node(k);
        let x = int_kappa[k].exp() * (x0 + inner);
        let pg = p.at(k)[(0, 0)] + gamma.at(k)[(0, 0)];
        let b_over_r = c.b[(0, 0)] * c.r_inv[(0, 0)];
        let m = (-b_over_r * (pg * x + lambda.at(k)[0]) + c.benchmark[0]) * l_inv;
        DVector::from_element(1, m)
    })
}
