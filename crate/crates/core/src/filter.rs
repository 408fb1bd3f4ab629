//! Discrete Kalman–Bucy filter driven by observation increments.
//!
//! ```text
//! dX̂ = [A X̂ + B u + B̃ m] dt + Π Fᵀ(Hᵀ)⁻¹ dŴ,    dŴ = H⁻¹(dV − (F X̂ + G) dt)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{NodeCoefficients, ValidatedModel};

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub xhat: DVector<f64>,
    pub t_index: usize,
}

pub fn filter_init(model: &ValidatedModel) -> FilterState {
    FilterState {
        xhat: model.params().x0.clone(),
        t_index: 0,
    }
}

/// `H⁻¹(dV − (F X̂ + G) dt)` with the coefficients of the current node.
pub fn innovation_increment(
    state: &FilterState,
    dv: &DVector<f64>,
    model: &ValidatedModel,
    dt: f64,
) -> Result<DVector<f64>> {
    let c = node_for(state, model)?;
    check_len(dv, c.f.nrows(), "dV")?;
    Ok(&c.h_inv * (dv - (&c.f * &state.xhat + &c.g) * dt))
}

/// One Euler–Maruyama step of the filter over `[t_k, t_k + dt]`.
pub fn filter_step(
    state: &FilterState,
    dv: &DVector<f64>,
    u: &DVector<f64>,
    m: &DVector<f64>,
    model: &ValidatedModel,
    pi_t: &DMatrix<f64>,
    dt: f64,
) -> Result<FilterState> {
    if state.t_index >= model.grid().n_steps() {
        return Err(Error::GridOverrun);
    }
    let c = node_for(state, model)?;
    let n = c.a.nrows();
    check_len(dv, n, "dV")?;
    check_len(u, c.b.ncols(), "u")?;
    check_len(m, c.b.ncols(), "m")?;
    let gain = filter_gain(c, pi_t);
    let mut xhat = state.xhat.clone();
    let mut scratch = Scratch::new(n);
    advance(&mut xhat, dv, u, m, c, &gain, dt, &mut scratch);
    if !xhat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "filter".into(),
            t: model.grid().node(state.t_index + 1),
        });
    }
    Ok(FilterState {
        xhat,
        t_index: state.t_index + 1,
    })
}

/// `Π Fᵀ(Hᵀ)⁻¹ H⁻¹`, applied to the raw observation surprise.
pub(crate) fn filter_gain(c: &NodeCoefficients, pi: &DMatrix<f64>) -> DMatrix<f64> {
    pi * &c.f_t_h_t_inv * &c.h_inv
}

pub(crate) struct Scratch {
    surprise: DVector<f64>,
    drift: DVector<f64>,
}

impl Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            surprise: DVector::zeros(n),
            drift: DVector::zeros(n),
        }
    }
}

/// In-place update shared with the population engine.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance(
    xhat: &mut DVector<f64>,
    dv: &DVector<f64>,
    u: &DVector<f64>,
    m: &DVector<f64>,
    c: &NodeCoefficients,
    gain: &DMatrix<f64>,
    dt: f64,
    s: &mut Scratch,
) {
    s.surprise.copy_from(dv);
    s.surprise.gemv(-dt, &c.f, xhat, 1.0);
    s.surprise.axpy(-dt, &c.g, 1.0);
    s.drift.gemv(1.0, &c.a, xhat, 0.0);
    s.drift.gemv(1.0, &c.b, u, 1.0);
    s.drift.gemv(1.0, &c.b_tilde, m, 1.0);
    xhat.axpy(dt, &s.drift, 1.0);
    xhat.gemv(1.0, gain, &s.surprise, 1.0);
}

fn node_for<'a>(state: &FilterState, model: &'a ValidatedModel) -> Result<&'a NodeCoefficients> {
    if state.t_index > model.grid().n_steps() {
        return Err(Error::GridOverrun);
    }
    Ok(model.node(state.t_index))
}

fn check_len(v: &DVector<f64>, expected: usize, what: &str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected: expected.to_string(),
            found: v.len().to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cash::cash_default_params;
    use crate::model::tests::scalar_params;
    use crate::model::{validate, Coefficient, Dims};
    use crate::riccati::solve_pi;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn init_uses_x0() {
        let vm = validate(cash_default_params()).unwrap();
        assert_eq!(filter_init(&vm).xhat[0], 3.5);
        assert_eq!(filter_init(&vm).t_index, 0);

        let mut p = scalar_params(0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        p.dims = Dims { n: 2, k: 1 };
        p.drift = Coefficient::constant(DMatrix::zeros(2, 2));
        p.control_gain = Coefficient::constant(DMatrix::from_element(2, 1, 1.0));
        p.average_gain = Coefficient::constant(DMatrix::zeros(2, 1));
        p.diffusion = Coefficient::constant(DMatrix::identity(2, 2));
        p.obs_gain = Coefficient::constant(DMatrix::identity(2, 2));
        p.obs_offset = Coefficient::column(&[0.0, 0.0]);
        p.obs_noise = Coefficient::constant(DMatrix::identity(2, 2));
        p.state_weight = Coefficient::constant(DMatrix::zeros(2, 2));
        p.terminal_weight = DMatrix::zeros(2, 2);
        p.x0 = DVector::from_vec(vec![1.0, 2.0]);
        let vm = validate(p).unwrap();
        assert_eq!(filter_init(&vm).xhat.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn innovation_vanishes_on_predicted_increment() {
        let vm = validate(cash_default_params()).unwrap();
        let s = filter_init(&vm);
        let dt = vm.grid().dt();
        let dv = v((2.8 * 3.5 + 6.0) * dt);
        assert!(innovation_increment(&s, &dv, &vm, dt).unwrap()[0].abs() < 1e-15);

        let mut p = scalar_params(0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        p.obs_gain = Coefficient::scalar(0.0);
        let vm = validate(p).unwrap();
        let s = filter_init(&vm);
        assert_eq!(innovation_increment(&s, &v(0.37), &vm, 0.01).unwrap()[0], 0.37);
    }

    #[test]
    fn first_cash_step_moves_by_drift_only() {
        let vm = validate(cash_default_params()).unwrap();
        let pi = solve_pi(&vm).unwrap();
        let s = filter_init(&vm);
        let dt = vm.grid().dt();
        let next = filter_step(&s, &v(123.0), &v(1.0), &v(2.0), &vm, pi.first(), dt).unwrap();
        let expected = 3.5 + (0.5 * 3.5 + 0.2 * 1.0 + 0.5 * 2.0) * dt;
        assert!((next.xhat[0] - expected).abs() < 1e-15);
        assert_eq!(next.t_index, 1);
    }

    #[test]
    fn noiseless_filter_tracks_state() {
        let vm = validate(scalar_params(0.3, 1.0, 0.5, 0.0, 0.0, 1.0)).unwrap();
        let pi = solve_pi(&vm).unwrap();
        let dt = vm.grid().dt();
        let mut s = filter_init(&vm);
        let mut x = 1.0;
        for k in 0..vm.grid().n_steps() {
            let (u, m) = (v(0.2 * k as f64), v(-0.1));
            let dv = v(x * dt);
            s = filter_step(&s, &dv, &u, &m, &vm, pi.at(k), dt).unwrap();
            x += (0.3 * x + u[0] + 0.5 * m[0]) * dt;
            assert!((s.xhat[0] - x).abs() < 1e-12);
        }
        assert!(matches!(
            filter_step(&s, &v(0.0), &v(0.0), &v(0.0), &vm, pi.last(), dt),
            Err(Error::GridOverrun)
        ));
    }

    #[test]
    fn no_information_without_f() {
        let mut p = cash_default_params();
        p.obs_gain = Coefficient::scalar(0.0);
        let vm = validate(p).unwrap();
        let pi = solve_pi(&vm).unwrap();
        let dt = vm.grid().dt();
        let s = FilterState {
            xhat: v(1.0),
            t_index: 500,
        };
        let a = filter_step(&s, &v(5.0), &v(0.0), &v(0.0), &vm, pi.at(500), dt).unwrap();
        let b = filter_step(&s, &v(-5.0), &v(0.0), &v(0.0), &vm, pi.at(500), dt).unwrap();
        assert_eq!(a, b);
    }
}
