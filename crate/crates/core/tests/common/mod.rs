#![allow(dead_code)]

use lqmfg_core::model::{Coefficient, Dims};
use lqmfg_core::{ModelParams, TimeGrid};
use nalgebra::{DMatrix, DVector};

#[allow(clippy::too_many_arguments)]
/// Scalar model with `F = H = R = 1`, `G = 0`, `K = 0`, `x0 = 1`, no affine terms.
pub fn scalar_params(a: f64, b: f64, b_tilde: f64, sigma: f64, q: f64, m: f64, horizon: f64, n_steps: usize) -> ModelParams {
    ModelParams {
        dims: Dims { n: 1, k: 1 },
        grid: TimeGrid::new(horizon, n_steps).unwrap(),
        drift: Coefficient::scalar(a),
        control_gain: Coefficient::scalar(b),
        average_gain: Coefficient::scalar(b_tilde),
        diffusion: Coefficient::scalar(sigma),
        obs_gain: Coefficient::scalar(1.0),
        obs_offset: Coefficient::scalar(0.0),
        obs_noise: Coefficient::scalar(1.0),
        state_weight: Coefficient::scalar(q),
        control_weight: Coefficient::scalar(1.0),
        average_weight: DMatrix::from_element(1, 1, 0.0),
        terminal_weight: DMatrix::from_element(1, 1, m),
        x0: DVector::from_element(1, 1.0),
        affine: None,
    }
}

/// `Ṗ = −2aP + b²P²`, `P(T) = M`, solved by separation of variables.
pub fn bernoulli_p(a: f64, b: f64, m: f64, t: f64, horizon: f64) -> f64 {
    let e = (2.0 * a * (t - horizon)).exp();
    2.0 * a * m / (b * b * m + (2.0 * a - b * b * m) * e)
}

/// Positive root of `2aΠ + σ² − (F/H)² Π² = 0`.
pub fn stationary_pi(a: f64, sigma: f64, f: f64, h: f64) -> f64 {
    let c = (f / h).powi(2);
    (a + (a * a + c * sigma * sigma).sqrt()) / c
}
