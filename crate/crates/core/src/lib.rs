//! Output-feedback stabilization of uncertain positive systems
//! `ẋ = u f(x) + c ψ(x)`.
//!
//! The crate checks the structural hypotheses that let the feedback
//! `u = γ ψ(x)` globally stabilize such a system (positivity, cooperativity,
//! concavity, the input threshold `β_m`), solves for equilibria, and
//! integrates open-loop, closed-loop and switched scenarios.
//!
//! ```
//! use posfeed::{model::SystemModel, verify::compute_beta_m};
//!
//! let s1 = SystemModel::builtin("S1").unwrap();
//! let beta_m = compute_beta_m(&s1).unwrap().value().unwrap();
//! assert!((beta_m - 0.2).abs() < 1e-12);
//! ```

pub mod equilibrium;
pub mod error;
pub mod expr;
pub mod io;
pub mod metzler;
pub mod model;
pub mod model_file;
pub mod sampling;
pub mod sim;
pub mod verify;

pub use equilibrium::{EquilibriumResult, StabilityRecord};
pub use error::{EvalError, IoError, LinalgError, ModelError, ParseError, SimError, SolveError, VerifyError};
pub use expr::{parse_expression, Expr};
pub use metzler::{Eigenpair, SquareMatrix};
pub use model::{Dynamics, Scenario, SystemModel};
pub use model_file::{parse_model_file, ModelFile};
pub use sampling::SampleDomain;
pub use sim::{IntegratorConfig, Trajectory};
pub use verify::{BetaM, CheckId, CheckRecord, VerificationReport};
