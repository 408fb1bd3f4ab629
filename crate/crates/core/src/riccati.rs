//! Control Riccati `P`, filter error Riccati `Π`, and the offset `ψ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ValidatedModel;
use crate::ode::{integrate_with, Direction};
use crate::path::{MatrixPath, VectorPath};

/// Eigenvalues of `Π` between this and zero are treated as roundoff and clipped.
pub const PSD_CLIP_TOL: f64 = 1e-10;

/// `Ṗ + PA + AᵀP − P B R⁻¹ Bᵀ P + Q = 0`, `P(T) = M`, integrated backward.
pub fn solve_p(model: &ValidatedModel) -> Result<MatrixPath> {
    let grid = *model.grid();
    integrate_with(
        |s, p: &DMatrix<f64>| {
            let c = model.node_at_half(s.half_index);
            let pa = p * &c.a;
            let mut d = &pa + pa.transpose() - p * &c.b_r_inv_bt * p + &c.q;
            d.neg_mut();
            d
        },
        model.params().terminal_weight.clone(),
        Direction::Backward,
        &grid,
        |p, _| {
            linalg::symmetrize_in_place(p);
            Ok(())
        },
    )
}

/// `Π̇ = AΠ + ΠAᵀ + σσᵀ − Π Fᵀ(HHᵀ)⁻¹F Π`, `Π(0) = 0`, integrated forward.
pub fn solve_pi(model: &ValidatedModel) -> Result<MatrixPath> {
    let grid = *model.grid();
    let n = model.dims().n;
    integrate_with(
        |s, pi: &DMatrix<f64>| {
            let c = model.node_at_half(s.half_index);
            let ap = &c.a * pi;
            &ap + ap.transpose() + &c.sigma_sigma_t - pi * &c.info * pi
        },
        DMatrix::zeros(n, n),
        Direction::Forward,
        &grid,
        |pi, t| {
            linalg::symmetrize_in_place(pi);
            let (lo, _) = linalg::sym_eig_range(pi);
            if lo < -PSD_CLIP_TOL {
                return Err(Error::LostPositivity {
                    t,
                    min_eigenvalue: lo,
                });
            }
            if lo < 0.0 {
                *pi = if n == 1 {
                    DMatrix::zeros(1, 1)
                } else {
                    linalg::clip_to_psd(pi)
                };
            }
            Ok(())
        },
    )
}

/// `ψ̇ + (Aᵀ − P B R⁻¹ Bᵀ) ψ + P (B K + B̃) m + P B r = 0`, `ψ(T) = −M l`.
///
/// Without the affine extension `r = 0` and `l = 0`.
pub fn solve_psi(model: &ValidatedModel, p: &MatrixPath, m: &VectorPath) -> Result<VectorPath> {
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    m.ensure_grid(&grid, "m")?;
    let k_mat = &model.params().average_weight;
    let p_half = p.half_samples();
    let m_half = m.half_samples();
    let terminal = -(&model.params().terminal_weight * model.terminal_target());
    integrate_with(
        |s, psi: &DVector<f64>| {
            let j = s.half_index;
            let c = model.node_at_half(j);
            let pj = &p_half[j];
            let drift = c.a.transpose() * psi - pj * (&c.b_r_inv_bt * psi);
            let forcing = (&c.b * k_mat + &c.b_tilde) * &m_half[j] + &c.b * &c.benchmark;
            -(drift + pj * forcing)
        },
        terminal,
        Direction::Backward,
        &grid,
        |_, _| Ok(()),
    )
}

/// Bounds entering the monotonicity condition of the consistency system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// `max_t λ_max(S₁(t))`
    pub lambda1_bound: f64,
    /// `min_t λ_min(S₂(t))`
    pub lambda2_bound: f64,
    pub satisfied: bool,
    /// Node where `λ_min(S₂) − λ_max(S₁)` is smallest.
    pub worst_t: f64,
}

/// Evaluate `S₁ = sym(P E R⁻¹ Bᵀ P)` and `S₂ = sym(B R⁻¹ Bᵀ + E R⁻¹ Bᵀ)` on every node,
/// `E = (B K + B̃)(I − K)⁻¹`.
pub fn check_monotonicity(model: &ValidatedModel, p: &MatrixPath) -> Result<MonotonicityReport> {
    let grid = *model.grid();
    p.ensure_grid(&grid, "P")?;
    let mut l1 = f64::NEG_INFINITY;
    let mut l2 = f64::INFINITY;
    let mut worst = (f64::INFINITY, 0.0);
    for (k, pk) in p.values().iter().enumerate() {
        let c = model.node(k);
        let pk = linalg::symmetrize(pk);
        let s1 = linalg::symmetrize(&(&pk * &c.coupling * &c.r_inv_bt * &pk));
        let s2 = linalg::symmetrize(&(&c.b_r_inv_bt + &c.coupling * &c.r_inv_bt));
        let (_, hi1) = linalg::sym_eig_range(&s1);
        let (lo2, _) = linalg::sym_eig_range(&s2);
        l1 = l1.max(hi1);
        l2 = l2.min(lo2);
        if lo2 - hi1 < worst.0 {
            worst = (lo2 - hi1, grid.node(k));
        }
    }
    Ok(MonotonicityReport {
        lambda1_bound: l1,
        lambda2_bound: l2,
        satisfied: l1 <= 0.0 && l2 >= 0.0 && l2 - l1 > 0.0,
        worst_t: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cash::cash_default_params;
    use crate::model::tests::scalar_params;
    use crate::model::validate;

    /// `Ṗ = −2aP + b²P²`, `P(T) = m`.
    fn bernoulli(a: f64, b: f64, m: f64, t: f64, horizon: f64) -> f64 {
        let e = (2.0 * a * (t - horizon)).exp();
        2.0 * a * m / (b * b * m + (2.0 * a - b * b * m) * e)
    }

    #[test]
    fn zero_data_gives_zero_p() {
        let vm = validate(scalar_params(0.3, 1.0, 0.2, 1.0, 0.0, 0.0)).unwrap();
        let p = solve_p(&vm).unwrap();
        assert!(p.values().iter().all(|v| v[(0, 0)] == 0.0));
    }

    #[test]
    fn scalar_p_matches_closed_form() {
        let vm = validate(scalar_params(0.5, 0.8, 0.0, 1.0, 0.0, 1.0)).unwrap();
        let p = solve_p(&vm).unwrap();
        let g = vm.grid();
        for (k, v) in p.values().iter().enumerate() {
            let exact = bernoulli(0.5, 0.8, 1.0, g.node(k), 1.0);
            assert!((v[(0, 0)] - exact).abs() < 1e-10 * exact.abs());
        }
    }

    #[test]
    fn cash_p_terminal_and_shape() {
        let vm = validate(cash_default_params()).unwrap();
        let p = solve_p(&vm).unwrap();
        assert_eq!(p.last()[(0, 0)], 1.0);
        let v = p.scalar_values();
        assert!(v.windows(2).all(|w| w[0] >= w[1]), "P should grow backward");
        assert!(v[0] < 25.0);
    }

    #[test]
    fn pi_starts_at_zero_and_vanishes_without_noise() {
        let vm = validate(scalar_params(0.3, 1.0, 0.0, 0.0, 1.0, 1.0)).unwrap();
        let pi = solve_pi(&vm).unwrap();
        assert!(pi.values().iter().all(|v| v[(0, 0)] == 0.0));
        let vm = validate(cash_default_params()).unwrap();
        let pi = solve_pi(&vm).unwrap();
        assert_eq!(pi.first()[(0, 0)], 0.0);
        assert!(pi.values().iter().all(|v| v[(0, 0)] >= 0.0));
    }

    #[test]
    fn psi_zero_for_homogeneous_data() {
        let vm = validate(scalar_params(0.3, 1.0, 0.5, 1.0, 1.0, 1.0)).unwrap();
        let p = solve_p(&vm).unwrap();
        let psi = solve_psi(&vm, &p, &VectorPath::zeros(*vm.grid(), 1)).unwrap();
        assert!(psi.values().iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn psi_terminal_value_cash() {
        let vm = validate(cash_default_params()).unwrap();
        let p = solve_p(&vm).unwrap();
        let psi = solve_psi(&vm, &p, &VectorPath::zeros(*vm.grid(), 1)).unwrap();
        assert_eq!(psi.last()[0], -3.0);
    }

    #[test]
    fn psi_rejects_foreign_grid() {
        let vm = validate(cash_default_params()).unwrap();
        let p = solve_p(&vm).unwrap();
        let other = crate::grid::TimeGrid::new(10.0, 10).unwrap();
        assert!(matches!(
            solve_psi(&vm, &p, &VectorPath::zeros(other, 1)),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn monotonicity_without_coupling() {
        let vm = validate(scalar_params(0.3, 1.0, 0.0, 1.0, 1.0, 1.0)).unwrap();
        let p = solve_p(&vm).unwrap();
        let rep = check_monotonicity(&vm, &p).unwrap();
        assert_eq!(rep.lambda1_bound, 0.0);
        assert!(rep.satisfied);

        let vm = validate(scalar_params(0.3, 0.0, 0.0, 1.0, 1.0, 1.0)).unwrap();
        let p = solve_p(&vm).unwrap();
        let rep = check_monotonicity(&vm, &p).unwrap();
        assert_eq!((rep.lambda1_bound, rep.lambda2_bound), (0.0, 0.0));
        assert!(!rep.satisfied);
    }

    #[test]
    fn cash_fails_monotonicity() {
        let vm = validate(cash_default_params()).unwrap();
        let p = solve_p(&vm).unwrap();
        let rep = check_monotonicity(&vm, &p).unwrap();
        // S₁ = b b̃ P² > 0
        let p0 = p.first()[(0, 0)];
        assert!((rep.lambda1_bound - 0.1 * p0 * p0).abs() < 1e-9 * p0 * p0);
        assert!(!rep.satisfied);
        assert!(rep.worst_t >= 0.0 && rep.worst_t <= 10.0);
    }
}
