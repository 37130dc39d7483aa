//! Error types shared across the crate.

use thiserror::Error;

/// Failure while evaluating an expression or a model field at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("state variable x{index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value produced")]
    NonFinite,
}

/// Syntax error in the expression language, located by byte offset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

/// Problems building a [`SystemModel`](crate::model::SystemModel).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected S1, S2 or S3)")]
    UnknownModel(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Linear-algebra failures from the Metzler routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("vector is not strongly positive")]
    NotStronglyPositive,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Equilibrium solver failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("parameter must be positive, got {0}")]
    NonPositiveParameter(f64),
    #[error("no convergence from any start (best residual {best_residual:e})")]
    NoConvergence { best_residual: f64 },
    #[error("singular Jacobian at the final iterate")]
    SingularJacobian,
    #[error("bracket endpoints have equal sign: G(lo) = {g_lo}, G(hi) = {g_hi}")]
    Bracket { g_lo: f64, g_hi: f64 },
    #[error("point is not an equilibrium (residual {0:e})")]
    NotEquilibrium(f64),
    #[error("model `{0}` is not S2")]
    WrongModel(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Integration failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid time span [{t0}, {t1}]")]
    TimeSpan { t0: f64, t1: f64 },
    #[error("initial state must be nonnegative and finite")]
    InvalidInitialState,
    #[error("initial state has dimension {got}, model has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("positivity violated at t = {t}: component {component} = {value:e}")]
    Positivity { t: f64, component: usize, value: f64 },
    #[error("Lyapunov companion collapsed or diverged at t = {0}")]
    Companion(f64),
    #[error("scenario not supported here: {0}")]
    Scenario(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Verification precondition failures. Failed hypotheses are verdicts, not errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("beta = {beta} does not exceed beta_m = {beta_m}")]
    BetaBelowThreshold { beta: f64, beta_m: f64 },
    #[error("beta_m is infeasible; no beta can be checked")]
    Infeasible,
    #[error("invalid sample domain: {0}")]
    Domain(String),
    #[error("initial states are not ordered (x0 <= y0 required)")]
    Unordered,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Artifact reading and writing.
#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trajectory file, row {row}: {message}")]
    Format { row: usize, message: String },
}
