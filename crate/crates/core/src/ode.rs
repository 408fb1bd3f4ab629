//! Fixed-step classical Runge–Kutta on a [`TimeGrid`].
//!
//! Every stage lands on a node or a midpoint, so the right-hand side receives a
//! [`Stage`] carrying the half-grid index. Paths can then be looked up at the
//! exact stage times without searching.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{NodeValue, Path};

/// Frobenius norm above which a solution is declared to have escaped.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Reversed time from a terminal value.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub t: f64,
    /// `t = half_index * dt / 2`.
    pub half_index: usize,
}

pub trait OdeState: NodeValue {
    /// `self + a * x`
    fn plus_scaled(&self, a: f64, x: &Self) -> Self;
    fn norm(&self) -> f64;
    fn is_finite(&self) -> bool;
}

impl OdeState for DMatrix<f64> {
    fn plus_scaled(&self, a: f64, x: &Self) -> Self {
        let mut out = self.clone();
        out.zip_apply(x, |o, xi| *o += a * xi);
        out
    }

    fn norm(&self) -> f64 {
        DMatrix::norm(self)
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for DVector<f64> {
    fn plus_scaled(&self, a: f64, x: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(a, x, 1.0);
        out
    }

    fn norm(&self) -> f64 {
        DVector::norm(self)
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

fn guard<V: OdeState>(v: &V, t: f64, context: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite {
            context: context.to_string(),
            t,
        });
    }
    let norm = v.norm();
    if norm > BLOWUP_NORM {
        return Err(Error::Blowup { t, norm });
    }
    Ok(())
}

/// RK4 with a hook run on every new node value (symmetrization, projection).
///
/// The boundary value is stored verbatim at its end of the grid.
pub fn integrate_with<V, F, G>(
    mut rhs: F,
    boundary: V,
    direction: Direction,
    grid: &TimeGrid,
    mut after_step: G,
) -> Result<Path<V>>
where
    V: OdeState,
    F: FnMut(Stage, &V) -> V,
    G: FnMut(&mut V, f64) -> Result<()>,
{
    let n = grid.n_steps();
    let h = grid.dt();
    let stage = |j: usize| Stage {
        t: grid.half_node(j),
        half_index: j,
    };
    let start = match direction {
        Direction::Forward => 0,
        Direction::Backward => n,
    };
    guard(&boundary, grid.node(start), "boundary value")?;
    let mut values = vec![boundary.clone(); n + 1];
    let mut y = boundary;
    for step in 0..n {
        let (k, j0, jm, j1, sign) = match direction {
            Direction::Forward => (step, 2 * step, 2 * step + 1, 2 * step + 2, 1.0),
            Direction::Backward => {
                let k = n - step;
                (k, 2 * k, 2 * k - 1, 2 * k - 2, -1.0)
            }
        };
        let hs = sign * h;
        let (s0, sm, s1) = (stage(j0), stage(jm), stage(j1));
        let k1 = rhs(s0, &y);
        guard(&k1, s0.t, "stage 1")?;
        let k2 = rhs(sm, &y.plus_scaled(0.5 * hs, &k1));
        guard(&k2, sm.t, "stage 2")?;
        let k3 = rhs(sm, &y.plus_scaled(0.5 * hs, &k2));
        guard(&k3, sm.t, "stage 3")?;
        let k4 = rhs(s1, &y.plus_scaled(hs, &k3));
        guard(&k4, s1.t, "stage 4")?;
        let mut next = y
            .plus_scaled(hs / 6.0, &k1)
            .plus_scaled(hs / 3.0, &k2)
            .plus_scaled(hs / 3.0, &k3)
            .plus_scaled(hs / 6.0, &k4);
        let t_next = s1.t;
        after_step(&mut next, t_next)?;
        guard(&next, t_next, "solution")?;
        let idx = match direction {
            Direction::Forward => k + 1,
            Direction::Backward => k - 1,
        };
        values[idx] = next.clone();
        y = next;
    }
    Path::new(*grid, values)
}

/// Solve `Ẏ = rhs(t, Y)` from `boundary` at `t = 0` (forward) or `t = T` (backward).
pub fn integrate_matrix_ode<F>(
    rhs: F,
    boundary: DMatrix<f64>,
    direction: Direction,
    grid: &TimeGrid,
) -> Result<Path<DMatrix<f64>>>
where
    F: FnMut(Stage, &DMatrix<f64>) -> DMatrix<f64>,
{
    integrate_with(rhs, boundary, direction, grid, |_, _| Ok(()))
}

pub fn integrate_vector_ode<F>(
    rhs: F,
    boundary: DVector<f64>,
    direction: Direction,
    grid: &TimeGrid,
) -> Result<Path<DVector<f64>>>
where
    F: FnMut(Stage, &DVector<f64>) -> DVector<f64>,
{
    integrate_with(rhs, boundary, direction, grid, |_, _| Ok(()))
}
