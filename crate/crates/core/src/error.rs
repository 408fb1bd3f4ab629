use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("{which} is not symmetric at t = {t}")]
    NotSymmetric { which: &'static str, t: f64 },
    #[error("{which} is not positive definite at t = {t} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        which: &'static str,
        t: f64,
        min_eigenvalue: f64,
    },
    #[error("{which} is not positive semidefinite at t = {t} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite {
        which: &'static str,
        t: f64,
        min_eigenvalue: f64,
    },
    #[error("I - K is singular or ill-conditioned (condition number {condition:e})")]
    SingularIminusK { condition: f64 },
    #[error("observation noise matrix H is singular at t = {t}")]
    SingularH { t: f64 },
    #[error("unknown coefficient `{0}`")]
    UnknownCoefficient(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("solution blew up at t = {t} (norm {norm:e})")]
    Blowup { t: f64, norm: f64 },
    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: String, t: f64 },
    #[error("error covariance lost positivity at t = {t} (smallest eigenvalue {min_eigenvalue:e})")]
    LostPositivity { t: f64, min_eigenvalue: f64 },
    #[error("paths are not defined on the same grid: {0}")]
    GridMismatch(String),
    #[error("fixed-point iteration did not converge after {max_iter} iterations (last update {last_delta:e})")]
    NoConvergence { max_iter: usize, last_delta: f64 },
    #[error("operation requires a scalar model (n = k = 1) with the affine cost extension")]
    NotScalarModel,
    #[error("filter already at the final grid node")]
    GridOverrun,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Error::SingularIminusK { .. } => "SingularIminusK",
            Error::SingularH { .. } => "SingularH",
            Error::UnknownCoefficient(_) => "UnknownCoefficient",
            Error::TimeOutOfRange { .. } => "TimeOutOfRange",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::Blowup { .. } => "Blowup",
            Error::NonFinite { .. } => "NonFinite",
            Error::LostPositivity { .. } => "LostPositivity",
            Error::GridMismatch(_) => "GridMismatch",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NotScalarModel => "NotScalarModel",
            Error::GridOverrun => "GridOverrun",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ModelFormat(_) => "ModelFormat",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// The module that raises this kind of error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NotPositiveSemidefinite { .. }
            | Error::SingularIminusK { .. }
            | Error::SingularH { .. }
            | Error::UnknownCoefficient(_)
            | Error::TimeOutOfRange { .. }
            | Error::InvalidGrid(_)
            | Error::ModelFormat(_) => "model",
            Error::Blowup { .. } | Error::NonFinite { .. } | Error::LostPositivity { .. } => {
                "riccati"
            }
            Error::GridMismatch(_) | Error::NoConvergence { .. } | Error::NotScalarModel => {
                "consistency"
            }
            Error::GridOverrun => "filter",
            Error::ConfigMismatch(_) | Error::InvalidArgument(_) => "population",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }
}
