//! Model data for the N-agent linear-quadratic game with partial observation.
//!
//! Agent `i` has state and observation
//!
//! ```text
//! dX_i = [A X_i + B u_i + B̃ u^(N,-i)] dt + σ dW_i,        X_i(0) = x0
//! dV_i = [F X_i + G] dt + H dW̄_i,                          V_i(0) = 0
//! ```
//!
//! and minimizes
//!
//! ```text
//! J_i = ½ E{ ∫ [⟨Q X_i, X_i⟩ + ⟨R (u_i − K u^(N,-i)), u_i − K u^(N,-i)⟩] dt + ⟨M X_i(T), X_i(T)⟩ }
//! ```
//!
//! where `u^(N,-i)` is the mean control of the other `N − 1` agents. The optional
//! [`AffineCost`] shifts the control penalty to `u − K u^(N,-i) − r(t)` and the
//! terminal penalty to `X(T) − l`.
//!
//! Time-dependent coefficients are either constants or piecewise-constant tables
//! with one entry per grid node. Between nodes the value of the left node is used.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;

const SYMMETRY_RTOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of `R(t)`.
pub const PD_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Constant(DMatrix<f64>),
    /// One matrix per grid node.
    Table(Vec<DMatrix<f64>>),
}

impl Coefficient {
    pub fn scalar(v: f64) -> Self {
        Coefficient::Constant(DMatrix::from_element(1, 1, v))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Coefficient::Constant(m)
    }

    pub fn column(v: &[f64]) -> Self {
        Coefficient::Constant(DMatrix::from_column_slice(v.len(), 1, v))
    }

    pub fn at_index(&self, k: usize) -> &DMatrix<f64> {
        match self {
            Coefficient::Constant(m) => m,
            Coefficient::Table(v) => &v[k.min(v.len() - 1)],
        }
    }

    pub fn is_table(&self) -> bool {
        matches!(self, Coefficient::Table(_))
    }

    fn check(&self, what: &str, rows: usize, cols: usize, nodes: usize) -> Result<()> {
        let mats: &[DMatrix<f64>] = match self {
            Coefficient::Constant(m) => std::slice::from_ref(m),
            Coefficient::Table(v) => {
                if v.len() != nodes {
                    return Err(Error::DimensionMismatch {
                        what: format!("{what} table length"),
                        expected: nodes.to_string(),
                        found: v.len().to_string(),
                    });
                }
                v
            }
        };
        for m in mats {
            if m.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    what: what.to_string(),
                    expected: format!("{rows}x{cols}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            if !linalg::all_finite(m) {
                return Err(Error::ModelFormat(format!("{what} has non-finite entries")));
            }
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        match self {
            Coefficient::Constant(m) => Coefficient::Constant(f(m)),
            Coefficient::Table(v) => Coefficient::Table(v.iter().map(f).collect()),
        }
    }
}

/// Names accepted by [`ModelParams::coefficient_at`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoefficientId {
    A,
    B,
    BTilde,
    Sigma,
    F,
    G,
    H,
    Q,
    R,
    K,
    M,
    Benchmark,
    TerminalTarget,
}

impl CoefficientId {
    pub const ALL: [CoefficientId; 13] = [
        CoefficientId::A,
        CoefficientId::B,
        CoefficientId::BTilde,
        CoefficientId::Sigma,
        CoefficientId::F,
        CoefficientId::G,
        CoefficientId::H,
        CoefficientId::Q,
        CoefficientId::R,
        CoefficientId::K,
        CoefficientId::M,
        CoefficientId::Benchmark,
        CoefficientId::TerminalTarget,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CoefficientId::A => "A",
            CoefficientId::B => "B",
            CoefficientId::BTilde => "B_tilde",
            CoefficientId::Sigma => "sigma",
            CoefficientId::F => "F",
            CoefficientId::G => "G",
            CoefficientId::H => "H",
            CoefficientId::Q => "Q",
            CoefficientId::R => "R",
            CoefficientId::K => "K",
            CoefficientId::M => "M",
            CoefficientId::Benchmark => "r",
            CoefficientId::TerminalTarget => "l",
        }
    }
}

impl FromStr for CoefficientId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CoefficientId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownCoefficient(s.to_string()))
    }
}

impl fmt::Display for CoefficientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
}

/// Linear cost terms: control benchmark `r(t)` and terminal target `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCost {
    /// `r(t)`, a `k`-vector function.
    pub benchmark: Coefficient,
    /// `l`, an `n`-vector.
    pub terminal_target: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub grid: TimeGrid,
    /// `A(t)`, n×n.
    pub drift: Coefficient,
    /// `B(t)`, n×k.
    pub control_gain: Coefficient,
    /// `B̃(t)`, n×k, loading of the control average.
    pub average_gain: Coefficient,
    /// `σ(t)`, n×n.
    pub diffusion: Coefficient,
    /// `F(t)`, n×n.
    pub obs_gain: Coefficient,
    /// `G(t)`, n-vector.
    pub obs_offset: Coefficient,
    /// `H(t)`, n×n, invertible.
    pub obs_noise: Coefficient,
    /// `Q(t)`, n×n symmetric PSD.
    pub state_weight: Coefficient,
    /// `R(t)`, k×k symmetric PD.
    pub control_weight: Coefficient,
    /// `K`, k×k symmetric.
    pub average_weight: DMatrix<f64>,
    /// `M`, n×n symmetric PSD.
    pub terminal_weight: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub affine: Option<AffineCost>,
}

impl ModelParams {
    pub fn coefficient(&self, id: CoefficientId) -> Option<&Coefficient> {
        Some(match id {
            CoefficientId::A => &self.drift,
            CoefficientId::B => &self.control_gain,
            CoefficientId::BTilde => &self.average_gain,
            CoefficientId::Sigma => &self.diffusion,
            CoefficientId::F => &self.obs_gain,
            CoefficientId::G => &self.obs_offset,
            CoefficientId::H => &self.obs_noise,
            CoefficientId::Q => &self.state_weight,
            CoefficientId::R => &self.control_weight,
            CoefficientId::Benchmark => return self.affine.as_ref().map(|a| &a.benchmark),
            CoefficientId::K | CoefficientId::M | CoefficientId::TerminalTarget => return None,
        })
    }

    /// Value of a named coefficient at time `t` (left-node convention).
    pub fn coefficient_at(&self, name: &str, t: f64) -> Result<DMatrix<f64>> {
        let id: CoefficientId = name.parse()?;
        let k = self.grid.index_at(t)?;
        match id {
            CoefficientId::K => Ok(self.average_weight.clone()),
            CoefficientId::M => Ok(self.terminal_weight.clone()),
            CoefficientId::TerminalTarget => self
                .affine
                .as_ref()
                .map(|a| DMatrix::from_column_slice(self.dims.n, 1, a.terminal_target.as_slice()))
                .ok_or_else(|| Error::UnknownCoefficient(name.to_string())),
            _ => self
                .coefficient(id)
                .map(|c| c.at_index(k).clone())
                .ok_or_else(|| Error::UnknownCoefficient(name.to_string())),
        }
    }

    /// Same model on a grid with `n_steps` steps. Tables cannot be regridded.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        if n_steps == self.grid.n_steps() {
            return Ok(self.clone());
        }
        let mut tables = [
            &self.drift,
            &self.control_gain,
            &self.average_gain,
            &self.diffusion,
            &self.obs_gain,
            &self.obs_offset,
            &self.obs_noise,
            &self.state_weight,
            &self.control_weight,
        ]
        .into_iter()
        .any(Coefficient::is_table);
        if let Some(a) = &self.affine {
            tables |= a.benchmark.is_table();
        }
        if tables {
            return Err(Error::ConfigMismatch(
                "cannot change the step count of a model with tabulated coefficients".into(),
            ));
        }
        let mut out = self.clone();
        out.grid = self.grid.with_steps(n_steps)?;
        Ok(out)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_params()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_params(self))?)
    }
}

/// Coefficients of one grid node, with the products used by every solver.
#[derive(Clone, Debug)]
pub struct NodeCoefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    /// `r(t)`, zero without the affine extension.
    pub benchmark: DVector<f64>,
    /// `R⁻¹ Bᵀ`
    pub r_inv_bt: DMatrix<f64>,
    /// `B R⁻¹ Bᵀ`
    pub b_r_inv_bt: DMatrix<f64>,
    /// `(B K + B̃)(I − K)⁻¹`
    pub coupling: DMatrix<f64>,
    /// `σ σᵀ`
    pub sigma_sigma_t: DMatrix<f64>,
    /// `Fᵀ (H Hᵀ)⁻¹ F`
    pub info: DMatrix<f64>,
    /// `Fᵀ (Hᵀ)⁻¹`
    pub f_t_h_t_inv: DMatrix<f64>,
}

/// Model that passed [`validate`]. Immutable.
#[derive(Clone, Debug)]
pub struct ValidatedModel {
    params: ModelParams,
    nodes: Vec<NodeCoefficients>,
    i_minus_k_inv: DMatrix<f64>,
}

impl PartialEq for ValidatedModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl ValidatedModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dims(&self) -> Dims {
        self.params.dims
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.params.grid
    }

    pub fn node(&self, k: usize) -> &NodeCoefficients {
        &self.nodes[k]
    }

    /// Coefficients in force at half-grid index `j` (time `j dt / 2`).
    pub fn node_at_half(&self, j: usize) -> &NodeCoefficients {
        &self.nodes[(j / 2).min(self.nodes.len() - 1)]
    }

    /// `(I − K)⁻¹`
    pub fn i_minus_k_inv(&self) -> &DMatrix<f64> {
        &self.i_minus_k_inv
    }

    pub fn has_affine(&self) -> bool {
        self.params.affine.is_some()
    }

    /// `l`, or zero without the affine extension.
    pub fn terminal_target(&self) -> DVector<f64> {
        self.params
            .affine
            .as_ref()
            .map(|a| a.terminal_target.clone())
            .unwrap_or_else(|| DVector::zeros(self.params.dims.n))
    }

    /// Same model on a different number of steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        validate(self.params.with_steps(n_steps)?)
    }
}

fn check_symmetric(which: &'static str, m: &DMatrix<f64>, t: f64) -> Result<()> {
    if linalg::asymmetry(m) > SYMMETRY_RTOL * m.norm() {
        return Err(Error::NotSymmetric { which, t });
    }
    Ok(())
}

fn check_psd(which: &'static str, m: &DMatrix<f64>, t: f64) -> Result<()> {
    let (lo, _) = linalg::sym_eig_range(m);
    if lo < -PSD_TOL * m.norm().max(1.0) {
        return Err(Error::NotPositiveSemidefinite {
            which,
            t,
            min_eigenvalue: lo,
        });
    }
    Ok(())
}

/// Check dimensions and the standing assumptions, then symmetrize `Q`, `R`, `K`, `M`.
pub fn validate(params: ModelParams) -> Result<ValidatedModel> {
    let Dims { n, k } = params.dims;
    if n == 0 || k == 0 {
        return Err(Error::DimensionMismatch {
            what: "dims".into(),
            expected: "n >= 1 and k >= 1".into(),
            found: format!("n = {n}, k = {k}"),
        });
    }
    let grid = params.grid;
    let nodes = grid.len();
    params.drift.check("A", n, n, nodes)?;
    params.control_gain.check("B", n, k, nodes)?;
    params.average_gain.check("B_tilde", n, k, nodes)?;
    params.diffusion.check("sigma", n, n, nodes)?;
    params.obs_gain.check("F", n, n, nodes)?;
    params.obs_offset.check("G", n, 1, nodes)?;
    params.obs_noise.check("H", n, n, nodes)?;
    params.state_weight.check("Q", n, n, nodes)?;
    params.control_weight.check("R", k, k, nodes)?;
    Coefficient::Constant(params.average_weight.clone()).check("K", k, k, nodes)?;
    Coefficient::Constant(params.terminal_weight.clone()).check("M", n, n, nodes)?;
    Coefficient::Constant(DMatrix::from_column_slice(params.x0.len(), 1, params.x0.as_slice()))
        .check("x0", n, 1, nodes)?;
    if let Some(aff) = &params.affine {
        aff.benchmark.check("r", k, 1, nodes)?;
        if aff.terminal_target.len() != n {
            return Err(Error::DimensionMismatch {
                what: "l".into(),
                expected: n.to_string(),
                found: aff.terminal_target.len().to_string(),
            });
        }
        if !aff.terminal_target.iter().all(|v| v.is_finite()) {
            return Err(Error::ModelFormat("l has non-finite entries".into()));
        }
    }

    check_symmetric("K", &params.average_weight, 0.0)?;
    check_symmetric("M", &params.terminal_weight, grid.horizon())?;
    check_psd("M", &params.terminal_weight, grid.horizon())?;
    for j in 0..nodes {
        let t = grid.node(j);
        let q = params.state_weight.at_index(j);
        check_symmetric("Q", q, t)?;
        check_psd("Q", q, t)?;
        let r = params.control_weight.at_index(j);
        check_symmetric("R", r, t)?;
        let (lo, _) = linalg::sym_eig_range(r);
        if lo <= PD_TOL {
            return Err(Error::NotPositiveDefinite {
                which: "R",
                t,
                min_eigenvalue: lo,
            });
        }
        let h = params.obs_noise.at_index(j);
        if linalg::condition_number(h) >= MAX_CONDITION {
            return Err(Error::SingularH { t });
        }
    }

    let mut params = params;
    params.state_weight = params.state_weight.map(linalg::symmetrize);
    params.control_weight = params.control_weight.map(linalg::symmetrize);
    linalg::symmetrize_in_place(&mut params.average_weight);
    linalg::symmetrize_in_place(&mut params.terminal_weight);

    let i_minus_k = DMatrix::identity(k, k) - &params.average_weight;
    let condition = linalg::condition_number(&i_minus_k);
    if condition >= MAX_CONDITION {
        return Err(Error::SingularIminusK { condition });
    }
    let i_minus_k_inv = i_minus_k
        .try_inverse()
        .ok_or(Error::SingularIminusK { condition })?;

    let nodes = (0..nodes)
        .map(|j| build_node(&params, &i_minus_k_inv, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidatedModel {
        params,
        nodes,
        i_minus_k_inv,
    })
}

fn build_node(p: &ModelParams, i_minus_k_inv: &DMatrix<f64>, j: usize) -> Result<NodeCoefficients> {
    let t = p.grid.node(j);
    let a = p.drift.at_index(j).clone();
    let b = p.control_gain.at_index(j).clone();
    let b_tilde = p.average_gain.at_index(j).clone();
    let sigma = p.diffusion.at_index(j).clone();
    let f = p.obs_gain.at_index(j).clone();
    let g = p.obs_offset.at_index(j).column(0).into_owned();
    let h = p.obs_noise.at_index(j).clone();
    let h_inv = h.clone().try_inverse().ok_or(Error::SingularH { t })?;
    let q = p.state_weight.at_index(j).clone();
    let r = p.control_weight.at_index(j).clone();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite {
            which: "R",
            t,
            min_eigenvalue: 0.0,
        })?;
    let benchmark = match &p.affine {
        Some(aff) => aff.benchmark.at_index(j).column(0).into_owned(),
        None => DVector::zeros(p.dims.k),
    };
    let r_inv_bt = &r_inv * b.transpose();
    let b_r_inv_bt = &b * &r_inv_bt;
    let coupling = (&b * &p.average_weight + &b_tilde) * i_minus_k_inv;
    let sigma_sigma_t = &sigma * sigma.transpose();
    let f_t_h_t_inv = f.transpose() * h_inv.transpose();
    let info = &f_t_h_t_inv * f_t_h_t_inv.transpose();
    Ok(NodeCoefficients {
        a,
        b,
        b_tilde,
        sigma,
        f,
        g,
        h,
        h_inv,
        q,
        r,
        r_inv,
        benchmark,
        r_inv_bt,
        b_r_inv_bt,
        coupling,
        sigma_sigma_t,
        info,
        f_t_h_t_inv,
    })
}

// ---------------------------------------------------------------------------
// JSON model file

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawCoefficient {
    Table { table: Vec<RawValue> },
    Constant(RawValue),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonFile {
    #[serde(rename = "T")]
    horizon: f64,
    n_steps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsFile {
    #[serde(rename = "A")]
    a: RawCoefficient,
    #[serde(rename = "B")]
    b: RawCoefficient,
    #[serde(rename = "B_tilde")]
    b_tilde: RawCoefficient,
    sigma: RawCoefficient,
    #[serde(rename = "F")]
    f: RawCoefficient,
    #[serde(rename = "G")]
    g: RawCoefficient,
    #[serde(rename = "H")]
    h: RawCoefficient,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    #[serde(rename = "Q")]
    q: RawCoefficient,
    #[serde(rename = "R")]
    r: RawCoefficient,
    #[serde(rename = "K")]
    k: RawValue,
    #[serde(rename = "M")]
    m: RawValue,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    r: RawCoefficient,
    l: RawValue,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    dims: Dims,
    horizon: HorizonFile,
    coefficients: CoefficientsFile,
    cost: CostFile,
    x0: RawValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affine_ext: Option<AffineFile>,
}

impl RawValue {
    fn into_matrix(self, what: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mismatch = |found: String| Error::DimensionMismatch {
            what: what.to_string(),
            expected: format!("{rows}x{cols}"),
            found,
        };
        match self {
            RawValue::Scalar(v) if rows == 1 && cols == 1 => Ok(DMatrix::from_element(1, 1, v)),
            RawValue::Scalar(_) => Err(mismatch("scalar".into())),
            RawValue::Vector(v) if v.len() == rows * cols && (rows == 1 || cols == 1) => {
                Ok(DMatrix::from_column_slice(rows, cols, &v))
            }
            RawValue::Vector(v) => Err(mismatch(format!("vector of length {}", v.len()))),
            RawValue::Matrix(m) => {
                let ok = m.len() == rows && m.iter().all(|row| row.len() == cols);
                if !ok {
                    let c = m.first().map_or(0, Vec::len);
                    return Err(mismatch(format!("{}x{c}", m.len())));
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        if m.shape() == (1, 1) {
            RawValue::Scalar(m[(0, 0)])
        } else if m.ncols() == 1 {
            RawValue::Vector(m.iter().copied().collect())
        } else {
            RawValue::Matrix(m.row_iter().map(|r| r.iter().copied().collect()).collect())
        }
    }
}

impl RawCoefficient {
    fn into_coefficient(self, what: &str, rows: usize, cols: usize) -> Result<Coefficient> {
        match self {
            RawCoefficient::Constant(v) => Ok(Coefficient::Constant(v.into_matrix(what, rows, cols)?)),
            RawCoefficient::Table { table } => Ok(Coefficient::Table(
                table
                    .into_iter()
                    .map(|v| v.into_matrix(what, rows, cols))
                    .collect::<Result<_>>()?,
            )),
        }
    }

    fn from_coefficient(c: &Coefficient) -> Self {
        match c {
            Coefficient::Constant(m) => RawCoefficient::Constant(RawValue::from_matrix(m)),
            Coefficient::Table(v) => RawCoefficient::Table {
                table: v.iter().map(RawValue::from_matrix).collect(),
            },
        }
    }
}

impl ModelFile {
    fn into_params(self) -> Result<ModelParams> {
        let Dims { n, k } = self.dims;
        let grid = TimeGrid::new(self.horizon.horizon, self.horizon.n_steps)?;
        let c = self.coefficients;
        let affine = match self.affine_ext {
            Some(aff) => Some(AffineCost {
                benchmark: aff.r.into_coefficient("r", k, 1)?,
                terminal_target: aff.l.into_matrix("l", n, 1)?.column(0).into_owned(),
            }),
            None => None,
        };
        Ok(ModelParams {
            dims: self.dims,
            grid,
            drift: c.a.into_coefficient("A", n, n)?,
            control_gain: c.b.into_coefficient("B", n, k)?,
            average_gain: c.b_tilde.into_coefficient("B_tilde", n, k)?,
            diffusion: c.sigma.into_coefficient("sigma", n, n)?,
            obs_gain: c.f.into_coefficient("F", n, n)?,
            obs_offset: c.g.into_coefficient("G", n, 1)?,
            obs_noise: c.h.into_coefficient("H", n, n)?,
            state_weight: self.cost.q.into_coefficient("Q", n, n)?,
            control_weight: self.cost.r.into_coefficient("R", k, k)?,
            average_weight: self.cost.k.into_matrix("K", k, k)?,
            terminal_weight: self.cost.m.into_matrix("M", n, n)?,
            x0: self.x0.into_matrix("x0", n, 1)?.column(0).into_owned(),
            affine,
        })
    }

    fn from_params(p: &ModelParams) -> Self {
        let raw = RawCoefficient::from_coefficient;
        let col = |v: &DVector<f64>| RawValue::from_matrix(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        ModelFile {
            dims: p.dims,
            horizon: HorizonFile {
                horizon: p.grid.horizon(),
                n_steps: p.grid.n_steps(),
            },
            coefficients: CoefficientsFile {
                a: raw(&p.drift),
                b: raw(&p.control_gain),
                b_tilde: raw(&p.average_gain),
                sigma: raw(&p.diffusion),
                f: raw(&p.obs_gain),
                g: raw(&p.obs_offset),
                h: raw(&p.obs_noise),
            },
            cost: CostFile {
                q: raw(&p.state_weight),
                r: raw(&p.control_weight),
                k: RawValue::from_matrix(&p.average_weight),
                m: RawValue::from_matrix(&p.terminal_weight),
            },
            x0: col(&p.x0),
            affine_ext: p.affine.as_ref().map(|a| AffineFile {
                r: raw(&a.benchmark),
                l: col(&a.terminal_target),
            }),
        }
    }
}
