//! Matrix- and vector-valued functions sampled on a [`TimeGrid`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Value stored at a grid node.
pub trait NodeValue: Clone {
    /// Whether CSV columns carry two indices.
    const IS_MATRIX: bool;
    fn shape(&self) -> (usize, usize);
    fn entries(&self) -> Vec<f64>;
    /// Row-major entries.
    fn entries_row_major(&self) -> Vec<f64>;
    fn combine(weights: &[f64; 4], values: [&Self; 4]) -> Self;
}

impl NodeValue for DMatrix<f64> {
    const IS_MATRIX: bool = true;

    fn shape(&self) -> (usize, usize) {
        DMatrix::shape(self)
    }

    fn entries(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    fn entries_row_major(&self) -> Vec<f64> {
        self.transpose().iter().copied().collect()
    }

    fn combine(w: &[f64; 4], v: [&Self; 4]) -> Self {
        let mut out = v[0] * w[0];
        for i in 1..4 {
            out.zip_apply(v[i], |o, x| *o += w[i] * x);
        }
        out
    }
}

impl NodeValue for DVector<f64> {
    const IS_MATRIX: bool = false;

    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }

    fn entries(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    fn entries_row_major(&self) -> Vec<f64> {
        self.entries()
    }

    fn combine(w: &[f64; 4], v: [&Self; 4]) -> Self {
        let mut out = v[0] * w[0];
        for i in 1..4 {
            out.axpy(w[i], v[i], 1.0);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path<V> {
    grid: TimeGrid,
    values: Vec<V>,
}

pub type MatrixPath = Path<DMatrix<f64>>;
pub type VectorPath = Path<DVector<f64>>;

impl<V: NodeValue> Path<V> {
    /// Checks one finite value per node, all of the same shape.
    pub fn new(grid: TimeGrid, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let shape = values[0].shape();
        for (k, v) in values.iter().enumerate() {
            if v.shape() != shape {
                return Err(Error::DimensionMismatch {
                    what: "path value".into(),
                    expected: format!("{}x{}", shape.0, shape.1),
                    found: format!("{}x{}", v.shape().0, v.shape().1),
                });
            }
            if v.entries().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "path".into(),
                    t: grid.node(k),
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: V) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl FnMut(usize) -> V) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(f).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    pub fn at(&self, k: usize) -> &V {
        &self.values[k]
    }

    pub fn first(&self) -> &V {
        &self.values[0]
    }

    pub fn last(&self) -> &V {
        &self.values[self.values.len() - 1]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    pub fn ensure_grid(&self, grid: &TimeGrid, what: &str) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::GridMismatch(format!(
                "{what} is on a grid with {} steps over [0, {}], expected {} steps over [0, {}]",
                self.grid.n_steps(),
                self.grid.horizon(),
                grid.n_steps(),
                grid.horizon()
            )));
        }
        Ok(())
    }

    /// Four-point Lagrange interpolation at `u` measured in steps.
    fn interpolate(&self, u: f64) -> V {
        let n = self.grid.n_steps();
        let base = (u.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
        let mut w = [1.0; 4];
        for (i, wi) in w.iter_mut().enumerate() {
            let xi = (base + i) as f64;
            for j in 0..4 {
                if j != i {
                    let xj = (base + j) as f64;
                    *wi *= (u - xj) / (xi - xj);
                }
            }
        }
        V::combine(
            &w,
            [
                &self.values[base],
                &self.values[base + 1],
                &self.values[base + 2],
                &self.values[base + 3],
            ],
        )
    }

    /// Cubic interpolation at time `t`; exact at nodes.
    pub fn sample(&self, t: f64) -> Result<V> {
        let k = self.grid.index_at(t)?;
        let u = t.clamp(0.0, self.grid.horizon()) / self.grid.dt();
        if (u - k as f64).abs() < 1e-12 {
            return Ok(self.values[k].clone());
        }
        Ok(self.interpolate(u))
    }

    /// Value at half-grid index `j` (time `j dt / 2`).
    pub fn sample_half(&self, j: usize) -> V {
        if j.is_multiple_of(2) {
            self.values[j / 2].clone()
        } else {
            self.interpolate(j as f64 / 2.0)
        }
    }

    /// Values at all `2 n_steps + 1` half-grid points.
    pub fn half_samples(&self) -> Vec<V> {
        (0..=2 * self.grid.n_steps()).map(|j| self.sample_half(j)).collect()
    }

    pub fn map<W: NodeValue>(&self, f: impl Fn(usize, &V) -> W) -> Result<Path<W>> {
        Path::new(self.grid, self.values.iter().enumerate().map(|(k, v)| f(k, v)).collect())
    }

    /// CSV with header `t,<name>_<i><j>...` (1-based, row-major) and one row per node.
    pub fn write_csv<W: Write>(&self, name: &str, out: &mut W) -> Result<()> {
        let (rows, cols) = self.shape();
        let mut header = vec!["t".to_string()];
        for i in 0..rows {
            for j in 0..cols {
                if !V::IS_MATRIX {
                    header.push(format!("{name}_{}", i + 1));
                } else {
                    header.push(format!("{name}_{}{}", i + 1, j + 1));
                }
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![fmt_f64(self.grid.node(k))];
            row.extend(v.entries_row_major().into_iter().map(fmt_f64));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        other.ensure_grid(&self.grid, "path")?;
        let mut worst: f64 = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.entries().iter().zip(b.entries()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }
}

impl VectorPath {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self::constant(grid, DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Scalar path from the first component.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// Sup over nodes of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl MatrixPath {
    pub fn scalar_values(&self) -> Vec<f64> {
        self.values.iter().map(|m| m[(0, 0)]).collect()
    }
}

/// Round-trip formatting, 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 20).unwrap()
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        let g = grid();
        assert!(VectorPath::new(g, vec![DVector::zeros(1); 3]).is_err());
        let mut v = vec![DVector::zeros(1); g.len()];
        v[4][0] = f64::NAN;
        assert!(matches!(VectorPath::new(g, v), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn cubic_sampling_is_exact_for_cubics() {
        let g = grid();
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 3.0 * t * t * t;
        let p = VectorPath::from_fn(g, |k| DVector::from_element(1, f(g.node(k)))).unwrap();
        for j in 0..=2 * g.n_steps() {
            let t = g.half_node(j);
            assert!((p.sample_half(j)[0] - f(t)).abs() < 1e-12);
        }
        assert!((p.sample(0.333).unwrap()[0] - f(0.333)).abs() < 1e-12);
        assert_eq!(p.sample(g.node(5)).unwrap()[0], f(g.node(5)));
    }

    #[test]
    fn csv_layout() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let p = MatrixPath::constant(g, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let mut buf = Vec::new();
        p.write_csv("P", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,P_11,P_12,P_21,P_22");
        assert_eq!(lines.len(), 4);
        let fields: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(fields, vec![0.0, 1.0, 2.0, 3.0, 4.0]);

        let v = VectorPath::constant(g, DVector::from_vec(vec![0.1, 0.2]));
        let mut buf = Vec::new();
        v.write_csv("m", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,m_1,m_2\n"));
    }

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, std::f64::consts::E] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
