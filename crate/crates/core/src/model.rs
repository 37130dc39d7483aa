//! Systems of the form `ẋ = u f(x) + c ψ(x)` with output `y = ψ(x)`.
//!
//! The three builtin examples are native evaluators with hand-written
//! Jacobians. Models read from files are expression-backed and get their
//! Jacobians by symbolic differentiation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, ModelError};
use crate::expr::{parse_expression, Expr};
use crate::metzler::SquareMatrix;

/// Input schedule for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Scenario {
    /// Constant input `u >= 0`.
    OpenLoop { u: f64 },
    /// Output feedback `u = γ ψ(x)`.
    ClosedLoop { gamma: f64 },
    /// Open loop with `u` until `t_switch`, closed loop afterwards.
    Switched { u: f64, gamma: f64, t_switch: f64 },
}

impl Scenario {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Scenario::OpenLoop { u } if !(u >= 0.0 && u.is_finite()) => Err(format!("input u = {u} must be >= 0")),
            Scenario::ClosedLoop { gamma } if !gamma.is_finite() => Err("gamma must be finite".into()),
            Scenario::Switched { u, gamma, t_switch } => {
                if !(u >= 0.0 && u.is_finite()) {
                    Err(format!("input u = {u} must be >= 0"))
                } else if !gamma.is_finite() {
                    Err("gamma must be finite".into())
                } else if !(t_switch >= 0.0 && t_switch.is_finite()) {
                    Err(format!("switch time {t_switch} must be >= 0"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Active dynamics at time `t`. The closed loop is active from `t_switch` on.
    pub fn dynamics_at(&self, t: f64) -> Dynamics {
        match *self {
            Scenario::OpenLoop { u } => Dynamics::OpenLoop(u),
            Scenario::ClosedLoop { gamma } => Dynamics::ClosedLoop(gamma),
            Scenario::Switched { u, gamma, t_switch } => {
                if t < t_switch {
                    Dynamics::OpenLoop(u)
                } else {
                    Dynamics::ClosedLoop(gamma)
                }
            }
        }
    }
}

/// One time-invariant right-hand side derived from a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    /// `u f(x) + c ψ(x)`
    OpenLoop(f64),
    /// `β f(x) + c`
    ConstantInput(f64),
    /// `ψ(x) (γ f(x) + c)`
    ClosedLoop(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct S1 {
    mu_m: f64,
    k_m: f64,
    k_i: f64,
    k: f64,
    x1_in: f64,
}

impl S1 {
    fn mu(&self, s: f64) -> f64 {
        self.mu_m * s / (self.k_m + s + s * s / self.k_i)
    }

    fn dmu(&self, s: f64) -> f64 {
        let d = self.k_m + s + s * s / self.k_i;
        self.mu_m * (self.k_m - s * s / self.k_i) / (d * d)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct S2 {
    l: f64,
    mu1: f64,
    mu2: f64,
    k1: f64,
    k2: f64,
    alpha1: f64,
    alpha2: f64,
    n: f64,
}

fn real_pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct S3 {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Builtin {
    S1(S1),
    S2(S2),
    S3(S3),
}

#[derive(Debug, Clone, PartialEq)]
struct Symbolic {
    /// Unbound sources, kept for rebinding.
    f_src: Vec<Expr>,
    psi_src: Expr,
    c_src: Vec<Expr>,
    f: Vec<Expr>,
    jac: Vec<Vec<Expr>>,
    psi: Expr,
    grad_psi: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Builtin(Builtin),
    Symbolic(Box<Symbolic>),
}

/// A system `ẋ = u f(x) + c ψ(x)`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    name: String,
    n: usize,
    c: Vec<f64>,
    params: BTreeMap<String, f64>,
    field: Field,
}

const S1_PARAMS: &[(&str, &str)] = &[("mu_m", "1"), ("K_m", "1"), ("K_i", "1"), ("k", "1"), ("x1_in", "5")];

const S2_PARAMS: &[(&str, &str)] = &[
    ("l", "2.1"),
    ("mu1", "2/2.1"),
    ("mu2", "4*(0.01+1/2.1)"),
    ("k1", "1/4.2"),
    ("k2", "0.01+1/2.1"),
    ("alpha1", "0.01"),
    ("alpha2", "1-2*(0.01+1/2.1)"),
    ("n", "80"),
];

const S3_PARAMS: &[(&str, &str)] = &[("k1", "0.015"), ("k2", "0.301"), ("k3", "2.5"), ("k4", "0.56")];

/// Names of the builtin models.
pub const BUILTIN_NAMES: [&str; 3] = ["S1", "S2", "S3"];

fn param_table(src: &[(&str, &str)]) -> BTreeMap<String, f64> {
    let empty = BTreeMap::new();
    src.iter()
        .map(|(k, v)| {
            let value = parse_expression(v)
                .and_then(|e| Ok(e.eval(&[], &empty).expect("constant parameter expression")))
                .expect("builtin parameter expression");
            (k.to_string(), value)
        })
        .collect()
}

fn get(params: &BTreeMap<String, f64>, key: &str) -> Result<f64, ModelError> {
    params.get(key).copied().ok_or_else(|| ModelError::UnboundParameter(key.into()))
}

fn eval_all(es: &[Expr], x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let empty = BTreeMap::new();
    es.iter().map(|e| e.eval(x, &empty)).collect()
}

impl Builtin {
    fn from_params(name: &str, p: &BTreeMap<String, f64>) -> Result<(Builtin, Vec<f64>), ModelError> {
        Ok(match name {
            "S1" => {
                let s = S1 {
                    mu_m: get(p, "mu_m")?,
                    k_m: get(p, "K_m")?,
                    k_i: get(p, "K_i")?,
                    k: get(p, "k")?,
                    x1_in: get(p, "x1_in")?,
                };
                let c = vec![-s.k, 1.0];
                (Builtin::S1(s), c)
            }
            "S2" => (
                Builtin::S2(S2 {
                    l: get(p, "l")?,
                    mu1: get(p, "mu1")?,
                    mu2: get(p, "mu2")?,
                    k1: get(p, "k1")?,
                    k2: get(p, "k2")?,
                    alpha1: get(p, "alpha1")?,
                    alpha2: get(p, "alpha2")?,
                    n: get(p, "n")?,
                }),
                vec![1.0, 0.0, 0.0],
            ),
            "S3" => {
                let s = S3 { k1: get(p, "k1")?, k2: get(p, "k2")?, k3: get(p, "k3")?, k4: get(p, "k4")? };
                let c = vec![-1.0, 1.0 / s.k1, 0.0];
                (Builtin::S3(s), c)
            }
            other => return Err(ModelError::UnknownModel(other.into())),
        })
    }

    fn f(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Builtin::S1(s) => {
                out[0] = s.x1_in - x[0];
                out[1] = -x[1];
            }
            Builtin::S2(s) => {
                out[0] = -s.l * x[0];
                out[1] = s.mu1 * x[0] / (s.k1 + x[0]) - x[1] + s.alpha1;
                out[2] = s.mu2 * x[1] / (s.k2 + x[1]) - x[2] + s.alpha2;
            }
            Builtin::S3(s) => {
                out[0] = -x[0] + s.k2 * x[2] + s.k2 * (s.k3 - s.k4);
                out[1] = (x[0] - x[1]) / s.k1;
                out[2] = x[1] - x[2] + s.k4;
            }
        }
    }

    fn psi(&self, x: &[f64]) -> f64 {
        match self {
            Builtin::S1(s) => s.mu(x[0]) * x[1],
            Builtin::S2(s) => 1.0 / (1.0 + real_pow(x[2], s.n)),
            Builtin::S3(_) => x[0] * x[1] * x[1],
        }
    }

    fn jacobian(&self, x: &[f64]) -> SquareMatrix {
        let rows = match self {
            Builtin::S1(_) => vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            Builtin::S2(s) => {
                let d1 = s.k1 + x[0];
                let d2 = s.k2 + x[1];
                vec![
                    vec![-s.l, 0.0, 0.0],
                    vec![s.mu1 * s.k1 / (d1 * d1), -1.0, 0.0],
                    vec![0.0, s.mu2 * s.k2 / (d2 * d2), -1.0],
                ]
            }
            Builtin::S3(s) => vec![
                vec![-1.0, 0.0, s.k2],
                vec![1.0 / s.k1, -1.0 / s.k1, 0.0],
                vec![0.0, 1.0, -1.0],
            ],
        };
        SquareMatrix::from_rows(&rows).expect("square")
    }

    fn grad_psi(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Builtin::S1(s) => vec![s.dmu(x[0]) * x[1], s.mu(x[0])],
            Builtin::S2(s) => {
                let p = 1.0 + real_pow(x[2], s.n);
                let d = if s.n == 0.0 { 0.0 } else { -s.n * real_pow(x[2], s.n - 1.0) / (p * p) };
                vec![0.0, 0.0, d]
            }
            Builtin::S3(_) => vec![x[1] * x[1], 2.0 * x[0] * x[1], 0.0],
        }
    }
}

fn check_finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl SystemModel {
    /// One of the three builtin systems, `S1`, `S2` or `S3`.
    pub fn builtin(name: &str) -> Result<SystemModel, ModelError> {
        let src = match name {
            "S1" => S1_PARAMS,
            "S2" => S2_PARAMS,
            "S3" => S3_PARAMS,
            other => return Err(ModelError::UnknownModel(other.into())),
        };
        Self::builtin_with_params(name, param_table(src))
    }

    fn builtin_with_params(name: &str, params: BTreeMap<String, f64>) -> Result<SystemModel, ModelError> {
        let (b, c) = Builtin::from_params(name, &params)?;
        let n = c.len();
        Ok(SystemModel { name: name.into(), n, c, params, field: Field::Builtin(b) })
    }

    /// Expression-backed model. `c` entries must fold to constants under `params`.
    pub fn from_expressions(
        name: impl Into<String>,
        f: Vec<Expr>,
        c: Vec<Expr>,
        psi: Expr,
        params: BTreeMap<String, f64>,
    ) -> Result<SystemModel, ModelError> {
        let n = f.len();
        if n == 0 {
            return Err(ModelError::DimensionMismatch("a model needs at least one state".into()));
        }
        if c.len() != n {
            return Err(ModelError::DimensionMismatch(format!("{n} field components but {} entries in c", c.len())));
        }
        for e in f.iter().chain(std::iter::once(&psi)).chain(&c) {
            if e.max_var() > n {
                return Err(ModelError::DimensionMismatch(format!(
                    "x{} referenced in a model of dimension {n}",
                    e.max_var()
                )));
            }
            if let Some(p) = e.params().into_iter().find(|p| !params.contains_key(p)) {
                return Err(ModelError::UnboundParameter(p));
            }
        }
        let sym = Symbolic::build(f, c.clone(), psi, &params)?;
        let empty = BTreeMap::new();
        let cv = c
            .iter()
            .map(|e| {
                if (1..=n).any(|i| e.contains_var(i)) {
                    return Err(ModelError::Format { line: 0, message: "c entries must be constant".into() });
                }
                Ok(e.bind(&params)?.eval(&[], &empty)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SystemModel { name: name.into(), n, c: cv, params, field: Field::Symbolic(Box::new(sym)) })
    }

    /// Copy with one parameter changed (builtins and expression models alike).
    pub fn with_param(&self, key: &str, value: f64) -> Result<SystemModel, ModelError> {
        if !self.params.contains_key(key) {
            return Err(ModelError::UnboundParameter(key.into()));
        }
        let mut params = self.params.clone();
        params.insert(key.into(), value);
        match &self.field {
            Field::Builtin(_) => Self::builtin_with_params(&self.name, params),
            Field::Symbolic(s) => Self::from_expressions(
                self.name.clone(),
                s.f_src.clone(),
                s.c_src.clone(),
                s.psi_src.clone(),
                params,
            ),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn is_builtin(&self) -> bool {
        matches!(self.field, Field::Builtin(_))
    }

    /// Source expressions `(f, c, ψ)` for expression-backed models.
    pub fn expressions(&self) -> Option<(&[Expr], &[Expr], &Expr)> {
        match &self.field {
            Field::Symbolic(s) => Some((&s.f_src, &s.c_src, &s.psi_src)),
            Field::Builtin(_) => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.n {
            return Err(EvalError::VariableOutOfRange { index: x.len(), dim: self.n });
        }
        Ok(())
    }

    pub fn f_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.check_dim(x)?;
        match &self.field {
            Field::Builtin(b) => b.f(x, out),
            Field::Symbolic(s) => {
                let empty = BTreeMap::new();
                for (o, e) in out.iter_mut().zip(&s.f) {
                    *o = e.eval(x, &empty)?;
                }
            }
        }
        out.iter().try_for_each(|v| check_finite(*v).map(|_| ()))
    }

    pub fn f(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n];
        self.f_into(x, &mut out)?;
        Ok(out)
    }

    pub fn psi(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.check_dim(x)?;
        match &self.field {
            Field::Builtin(b) => check_finite(b.psi(x)),
            Field::Symbolic(s) => s.psi.eval(x, &BTreeMap::new()),
        }
    }

    /// Jacobian `Df(x)`.
    pub fn jacobian(&self, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        self.check_dim(x)?;
        let j = match &self.field {
            Field::Builtin(b) => b.jacobian(x),
            Field::Symbolic(s) => {
                let rows = s.jac.iter().map(|row| eval_all(row, x)).collect::<Result<Vec<_>, _>>()?;
                SquareMatrix::from_rows(&rows).expect("square")
            }
        };
        if j.is_finite() {
            Ok(j)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Gradient of ψ.
    pub fn grad_psi(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.check_dim(x)?;
        let g = match &self.field {
            Field::Builtin(b) => b.grad_psi(x),
            Field::Symbolic(s) => eval_all(&s.grad_psi, x)?,
        };
        g.into_iter().map(check_finite).collect()
    }

    /// Right-hand side of the chosen dynamics, written into `out`.
    pub fn rhs_into(&self, dynamics: Dynamics, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.f_into(x, out)?;
        match dynamics {
            Dynamics::OpenLoop(u) => {
                let psi = self.psi(x)?;
                for (o, c) in out.iter_mut().zip(&self.c) {
                    *o = u * *o + c * psi;
                }
            }
            Dynamics::ConstantInput(beta) => {
                for (o, c) in out.iter_mut().zip(&self.c) {
                    *o = beta * *o + c;
                }
            }
            Dynamics::ClosedLoop(gamma) => {
                let psi = self.psi(x)?;
                for (o, c) in out.iter_mut().zip(&self.c) {
                    *o = psi * (gamma * *o + c);
                }
            }
        }
        Ok(())
    }

    pub fn rhs(&self, dynamics: Dynamics, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n];
        self.rhs_into(dynamics, x, &mut out)?;
        Ok(out)
    }

    /// `u f(x) + c ψ(x)`
    pub fn rhs_open_loop(&self, u: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.rhs(Dynamics::OpenLoop(u), x)
    }

    /// `β f(x) + c`
    pub fn rhs_constant_input(&self, beta: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.rhs(Dynamics::ConstantInput(beta), x)
    }

    /// `ψ(x) (γ f(x) + c)`
    pub fn rhs_closed_loop(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.rhs(Dynamics::ClosedLoop(gamma), x)
    }

    /// Jacobian of the full right-hand side of `dynamics` at `x`.
    pub fn rhs_jacobian(&self, dynamics: Dynamics, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        let df = self.jacobian(x)?;
        let n = self.n;
        let mut j = SquareMatrix::zeros(n);
        match dynamics {
            Dynamics::ConstantInput(beta) => j = df.scale(beta),
            Dynamics::OpenLoop(u) => {
                let g = self.grad_psi(x)?;
                for r in 0..n {
                    for s in 0..n {
                        j[(r, s)] = u * df[(r, s)] + self.c[r] * g[s];
                    }
                }
            }
            Dynamics::ClosedLoop(gamma) => {
                let g = self.grad_psi(x)?;
                let psi = self.psi(x)?;
                let h = self.rhs_constant_input(gamma, x)?;
                for r in 0..n {
                    for s in 0..n {
                        j[(r, s)] = h[r] * g[s] + psi * gamma * df[(r, s)];
                    }
                }
            }
        }
        Ok(j)
    }
}

impl Symbolic {
    fn build(f_src: Vec<Expr>, c_src: Vec<Expr>, psi_src: Expr, params: &BTreeMap<String, f64>) -> Result<Self, ModelError> {
        let n = f_src.len();
        let f = f_src.iter().map(|e| e.bind(params)).collect::<Result<Vec<_>, _>>()?;
        let psi = psi_src.bind(params)?;
        let jac = f.iter().map(|fi| (1..=n).map(|j| fi.differentiate(j)).collect()).collect();
        let grad_psi = (1..=n).map(|j| psi.differentiate(j)).collect();
        Ok(Symbolic { f_src, psi_src, c_src, f, jac, psi, grad_psi })
    }
}

/// Builtin lookup, as a free function.
pub fn builtin(name: &str) -> Result<SystemModel, ModelError> {
    SystemModel::builtin(name)
}

/// Jacobian `Df(x)` of a model.
pub fn jacobian(m: &SystemModel, x: &[f64]) -> Result<SquareMatrix, EvalError> {
    m.jacobian(x)
}
