//! Fixtures shared by the benchmarks.

use lqmfg_core::cash::cash_default_params;
use lqmfg_core::model::{Coefficient, Dims};
use lqmfg_core::{validate, ModelParams, TimeGrid, ValidatedModel};
use nalgebra::{DMatrix, DVector};

pub fn cash(n_steps: usize) -> ValidatedModel {
    validate(cash_default_params().with_steps(n_steps).unwrap()).unwrap()
}

/// Deterministic `n`-dimensional model with `k = n`, mildly coupled and stable.
pub fn coupled(n: usize, n_steps: usize) -> ValidatedModel {
    let wave = |i: usize, j: usize, s: f64| s * ((1 + i * n + j) as f64 * 0.7).sin();
    let a = DMatrix::from_fn(n, n, |i, j| wave(i, j, 0.3) - if i == j { 0.5 } else { 0.0 });
    let b = DMatrix::from_fn(n, n, |i, j| wave(j, i, 0.4) + if i == j { 1.0 } else { 0.0 });
    let eye = DMatrix::<f64>::identity(n, n);
    let params = ModelParams {
        dims: Dims { n, k: n },
        grid: TimeGrid::new(1.0, n_steps).unwrap(),
        drift: Coefficient::constant(a),
        control_gain: Coefficient::constant(b),
        average_gain: Coefficient::constant(DMatrix::from_fn(n, n, |i, j| wave(i, j, 0.2))),
        diffusion: Coefficient::constant(&eye * 0.5),
        obs_gain: Coefficient::constant(eye.clone()),
        obs_offset: Coefficient::constant(DMatrix::zeros(n, 1)),
        obs_noise: Coefficient::constant(eye.clone()),
        state_weight: Coefficient::constant(eye.clone()),
        control_weight: Coefficient::constant(eye.clone()),
        average_weight: &eye * 0.1,
        terminal_weight: eye,
        x0: DVector::from_element(n, 1.0),
        affine: None,
    };
    validate(params).unwrap()
}
