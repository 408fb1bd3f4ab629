//! Uniform time grid on `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k * T / n_steps`, `k = 0..=n_steps`.
///
/// The last node is `T` itself, never an accumulated sum of steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 steps, got {n_steps}")));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Time of half-grid index `j`, i.e. `j * dt / 2`.
    pub fn half_node(&self, j: usize) -> f64 {
        if j.is_multiple_of(2) {
            self.node(j / 2)
        } else {
            0.5 * (self.node(j / 2) + self.node(j / 2 + 1))
        }
    }

    /// Node at or left of `t` (piecewise-constant, left-node convention).
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let slack = 1e-12 * self.horizon;
        if !t.is_finite() || t < -slack || t > self.horizon + slack {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let k = (t.max(0.0) / self.dt() + 1e-9).floor() as usize;
        Ok(k.min(self.n_steps))
    }

    /// Same grid with a different number of steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.horizon, n_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_exact() {
        let g = TimeGrid::new(10.0, 3).unwrap();
        assert_eq!(g.node(3), 10.0);
        assert_eq!(g.nodes().count(), 4);
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.node(7), 0.3);
    }

    #[test]
    fn nodes_strictly_increasing() {
        let g = TimeGrid::new(1.7, 997).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(nodes[0], 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn index_uses_left_node() {
        let g = TimeGrid::new(10.0, 10).unwrap();
        assert_eq!(g.index_at(1.5).unwrap(), 1);
        assert_eq!(g.index_at(3.0).unwrap(), 3);
        assert_eq!(g.index_at(10.0).unwrap(), 10);
        assert_eq!(g.index_at(0.0).unwrap(), 0);
        // 0.3 / 0.1 is 2.9999999999999996 in floating point
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(g.index_at(0.3).unwrap(), 3);
        assert!(matches!(g.index_at(1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(g.index_at(-0.1).is_err());
    }

    #[test]
    fn half_nodes() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.half_node(0), 0.0);
        assert_eq!(g.half_node(1), 0.125);
        assert_eq!(g.half_node(8), 1.0);
    }
}
