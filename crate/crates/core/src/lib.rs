//! Decentralized strategies for linear-quadratic mean-field games with partial
//! observation and control-average coupling.
//!
//! The pipeline is: [`model::validate`] the coefficients, solve the control
//! Riccati equation [`riccati::solve_p`] and the filter Riccati equation
//! [`riccati::solve_pi`], solve the consistency condition for the control-average
//! limit [`consistency::solve_cc_decoupled`], then simulate agents with
//! [`population::simulate_population`] and probe the ε-Nash property with the
//! [`nash`] diagnostics.
//!
//! ```
//! use lqmfg_core::{cash, model, population::{Equilibrium, SimConfig}};
//!
//! let params = cash::cash_default_params().with_steps(200).unwrap();
//! let eq = Equilibrium::solve(model::validate(params).unwrap()).unwrap();
//! let run = eq.simulate(&SimConfig::new(10, 7, *eq.model.grid())).unwrap();
//! assert_eq!(run.costs.len(), 10);
//! ```

pub mod cash;
pub mod consistency;
pub mod error;
pub mod filter;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod nash;
pub mod noise;
pub mod ode;
pub mod path;
pub mod population;
pub mod riccati;

pub use consistency::{CCMethod, CCResidual, CCSolution, FixedPointOptions};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{validate, Coefficient, Dims, ModelParams, ValidatedModel};
pub use nash::{DeviationResult, ScalingReport};
pub use path::{MatrixPath, VectorPath};
pub use population::{AgentPath, Equilibrium, PopulationResult, SimConfig};
pub use riccati::MonotonicityReport;
