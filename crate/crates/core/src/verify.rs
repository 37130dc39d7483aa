//! Sampled checks of the sufficient hypotheses (H2-1 … H2-6), the
//! input threshold `β_m`, and simulation evidence for order preservation
//! and global convergence.
//!
//! Quantifiers over the orthant are replaced by a finite, seeded sample of a
//! box; every report echoes the domain it used. A `fail` verdict always
//! carries at least one concrete counterexample.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::equilibrium::{dist_inf, solve_constant_input};
use crate::error::{EvalError, VerifyError};
use crate::model::{Scenario, SystemModel};
use crate::sim::{detect_convergence, integrate, integrate_constant_input, IntegratorConfig};

pub use crate::sampling::SampleDomain;

/// Sign checks at exact points.
pub const SIGN_TOL: f64 = 1e-12;
/// Jacobian comparisons.
pub const JACOBIAN_TOL: f64 = 1e-9;
/// Trajectory ordering.
pub const ORDER_TOL: f64 = 1e-7;
/// Stored counterexamples per check; the total count is kept separately.
pub const MAX_COUNTEREXAMPLES: usize = 16;
/// Components of `x*_β` must exceed this for H2-6.
pub const STRONG_POSITIVITY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CheckId {
    #[serde(rename = "H2-1")]
    H2_1,
    #[serde(rename = "H2-2")]
    H2_2,
    #[serde(rename = "H2-3")]
    H2_3,
    #[serde(rename = "H2-4")]
    H2_4,
    #[serde(rename = "H2-5")]
    H2_5,
    #[serde(rename = "H2-6")]
    H2_6,
    #[serde(rename = "positivity")]
    Positivity,
    #[serde(rename = "order-preservation")]
    OrderPreservation,
    #[serde(rename = "gas")]
    Gas,
}

impl CheckId {
    pub fn label(self) -> &'static str {
        match self {
            CheckId::H2_1 => "H2-1",
            CheckId::H2_2 => "H2-2",
            CheckId::H2_3 => "H2-3",
            CheckId::H2_4 => "H2-4",
            CheckId::H2_5 => "H2-5",
            CheckId::H2_6 => "H2-6",
            CheckId::Positivity => "positivity",
            CheckId::OrderPreservation => "order-preservation",
            CheckId::Gas => "gas",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotChecked,
}

/// A concrete point (or ordered pair) where a check is violated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub sample_index: usize,
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<Vec<f64>>,
    /// What was measured, e.g. `f_2(x | x_2 = 0)` or `Df[1][3]`.
    pub quantity: String,
    /// Offending value; `None` when evaluation itself failed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: CheckId,
    pub verdict: Verdict,
    pub samples: usize,
    pub violations: usize,
    pub counterexamples: Vec<Counterexample>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub recorded: BTreeMap<String, Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(id: CheckId) -> Self {
        CheckRecord {
            id,
            verdict: Verdict::Pass,
            samples: 0,
            violations: 0,
            counterexamples: Vec::new(),
            recorded: BTreeMap::new(),
            note: None,
        }
    }

    fn not_checked(id: CheckId, note: impl Into<String>) -> Self {
        CheckRecord { verdict: Verdict::NotChecked, note: Some(note.into()), ..Self::new(id) }
    }

    fn violate(&mut self, cx: Counterexample) {
        self.verdict = Verdict::Fail;
        self.violations += 1;
        self.counterexamples.push(cx);
    }

    /// Sort counterexamples by sample index and truncate.
    fn finish(mut self) -> Self {
        self.counterexamples.sort_by_key(|c| c.sample_index);
        self.counterexamples.truncate(MAX_COUNTEREXAMPLES);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn eval_failure(sample_index: usize, point: &[f64], what: &str, err: &EvalError) -> Counterexample {
    Counterexample { sample_index, point: point.to_vec(), partner: None, quantity: format!("{what}: {err}"), value: None }
}

/// The boundary checks: H2-1 (ψ > 0 inside, `c_i ψ >= 0` on faces) and
/// positivity of `ẋ = f(x)` (`f_i >= 0` on the face `x_i = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryChecks {
    pub h2_1: CheckRecord,
    pub positivity: CheckRecord,
}

pub fn check_positivity_boundary(m: &SystemModel, d: &SampleDomain) -> BoundaryChecks {
    let n = m.dim();
    let samples = d.samples();
    let mut h2_1 = CheckRecord::new(CheckId::H2_1);
    let mut pos = CheckRecord::new(CheckId::Positivity);

    for (k, x) in samples.iter().enumerate() {
        if x.iter().all(|v| *v > 0.0) {
            h2_1.samples += 1;
            match m.psi(x) {
                Ok(p) if p > 0.0 => {}
                Ok(p) => h2_1.violate(Counterexample {
                    sample_index: k,
                    point: x.clone(),
                    partner: None,
                    quantity: "psi(x) at strongly positive x".into(),
                    value: Some(p),
                }),
                Err(e) => h2_1.violate(eval_failure(k, x, "psi(x)", &e)),
            }
        }
        for i in 0..n {
            let mut face = x.clone();
            face[i] = 0.0;
            h2_1.samples += 1;
            pos.samples += 1;
            match m.psi(&face) {
                Ok(p) => {
                    let v = m.c()[i] * p;
                    if !(v >= -SIGN_TOL) {
                        h2_1.violate(Counterexample {
                            sample_index: k,
                            point: face.clone(),
                            partner: None,
                            quantity: format!("c_{0} psi(x | x_{0} = 0)", i + 1),
                            value: Some(v),
                        });
                    }
                }
                Err(e) => h2_1.violate(eval_failure(k, &face, "psi(x)", &e)),
            }
            match m.f(&face) {
                Ok(fv) if fv[i] >= -SIGN_TOL => {}
                Ok(fv) => pos.violate(Counterexample {
                    sample_index: k,
                    point: face.clone(),
                    partner: None,
                    quantity: format!("f_{0}(x | x_{0} = 0)", i + 1),
                    value: Some(fv[i]),
                }),
                Err(e) => pos.violate(eval_failure(k, &face, "f(x)", &e)),
            }
        }
    }
    BoundaryChecks { h2_1: h2_1.finish(), positivity: pos.finish() }
}

/// H2-2: `f(0) >= 0`.
pub fn check_h2_2(m: &SystemModel) -> CheckRecord {
    let mut r = CheckRecord::new(CheckId::H2_2);
    let zero = vec![0.0; m.dim()];
    r.samples = 1;
    match m.f(&zero) {
        Ok(f0) => {
            for (i, v) in f0.iter().enumerate() {
                if !(*v >= -SIGN_TOL) {
                    r.violate(Counterexample {
                        sample_index: 0,
                        point: zero.clone(),
                        partner: None,
                        quantity: format!("f_{}(0)", i + 1),
                        value: Some(*v),
                    });
                }
            }
            r.recorded.insert("f0".into(), f0);
        }
        Err(e) => r.violate(eval_failure(0, &zero, "f(0)", &e)),
    }
    r.finish()
}

/// H2-3: `Df(x)` is Metzler at every sample.
pub fn check_cooperativity(m: &SystemModel, d: &SampleDomain) -> CheckRecord {
    let mut r = CheckRecord::new(CheckId::H2_3);
    let n = m.dim();
    for (k, x) in d.samples().iter().enumerate() {
        r.samples += 1;
        let j = match m.jacobian(x) {
            Ok(j) => j,
            Err(e) => {
                r.violate(eval_failure(k, x, "Df(x)", &e));
                continue;
            }
        };
        for a in 0..n {
            for b in 0..n {
                if a != b && !(j[(a, b)] >= -JACOBIAN_TOL) {
                    r.violate(Counterexample {
                        sample_index: k,
                        point: x.clone(),
                        partner: None,
                        quantity: format!("Df[{}][{}]", a + 1, b + 1),
                        value: Some(j[(a, b)]),
                    });
                }
            }
        }
    }
    r.finish()
}

/// Ordered pairs `x <= y` inside the box, seeded from the domain.
pub fn ordered_pairs(d: &SampleDomain, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = d.lower.iter().zip(&d.upper).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
            let y: Vec<f64> = x.iter().zip(&d.upper).map(|(xi, b)| xi + (b - xi) * rng.gen::<f64>()).collect();
            (x, y)
        })
        .collect()
}

/// H2-4: `x <= y ⇒ Df(x) >= Df(y)` on `pair_count` random ordered pairs.
pub fn check_concavity(m: &SystemModel, d: &SampleDomain, pair_count: usize) -> CheckRecord {
    let mut r = CheckRecord::new(CheckId::H2_4);
    let n = m.dim();
    for (k, (x, y)) in ordered_pairs(d, pair_count).into_iter().enumerate() {
        r.samples += 1;
        let (jx, jy) = match (m.jacobian(&x), m.jacobian(&y)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                r.violate(Counterexample { partner: Some(y.clone()), ..eval_failure(k, &x, "Df", &e) });
                continue;
            }
        };
        for a in 0..n {
            for b in 0..n {
                let gap = jx[(a, b)] - jy[(a, b)];
                if !(gap >= -JACOBIAN_TOL) {
                    r.violate(Counterexample {
                        sample_index: k,
                        point: x.clone(),
                        partner: Some(y.clone()),
                        quantity: format!("Df(x)[{0}][{1}] - Df(y)[{0}][{1}]", a + 1, b + 1),
                        value: Some(gap),
                    });
                }
            }
        }
    }
    r.finish()
}

/// Threshold above which `β f(0) + c >> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaM {
    Value(f64),
    Infeasible,
}

impl BetaM {
    pub fn value(self) -> Option<f64> {
        match self {
            BetaM::Value(v) => Some(v),
            BetaM::Infeasible => None,
        }
    }
}

impl Serialize for BetaM {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BetaM::Value(v) => s.serialize_f64(*v),
            BetaM::Infeasible => s.serialize_str("infeasible"),
        }
    }
}

/// Closed-form `β_m` from `f(0)` and `c`, component by component.
pub fn compute_beta_m(m: &SystemModel) -> Result<BetaM, EvalError> {
    let f0 = m.f(&vec![0.0; m.dim()])?;
    Ok(beta_m_from(&f0, m.c()))
}

pub fn beta_m_from(f0: &[f64], c: &[f64]) -> BetaM {
    let mut beta_m = 0.0f64;
    for (fi, ci) in f0.iter().zip(c) {
        let threshold = if *fi > 0.0 {
            (-ci / fi).max(0.0)
        } else if *fi == 0.0 && *ci > 0.0 {
            0.0
        } else {
            return BetaM::Infeasible;
        };
        beta_m = beta_m.max(threshold);
    }
    BetaM::Value(beta_m)
}

fn check_h2_5(m: &SystemModel) -> (CheckRecord, Option<BetaM>) {
    let mut r = CheckRecord::new(CheckId::H2_5);
    r.samples = 1;
    let zero = vec![0.0; m.dim()];
    match compute_beta_m(m) {
        Ok(BetaM::Value(b)) => {
            r.recorded.insert("beta_m".into(), vec![b]);
            (r.finish(), Some(BetaM::Value(b)))
        }
        Ok(BetaM::Infeasible) => {
            let f0 = m.f(&zero).unwrap_or_default();
            let (i, fi) = f0
                .iter()
                .zip(m.c())
                .enumerate()
                .find(|(_, (f, c))| **f < 0.0 || (**f == 0.0 && **c <= 0.0))
                .map(|(i, (f, _))| (i, *f))
                .unwrap_or((0, f64::NAN));
            r.violate(Counterexample {
                sample_index: 0,
                point: zero,
                partner: None,
                quantity: format!("f_{0}(0) (with c_{0} = {1}) admits no threshold", i + 1, m.c()[i]),
                value: Some(fi),
            });
            (r.finish(), Some(BetaM::Infeasible))
        }
        Err(e) => {
            r.violate(eval_failure(0, &zero, "f(0)", &e));
            (r.finish(), None)
        }
    }
}

fn check_h2_6(m: &SystemModel, betas: &[f64]) -> CheckRecord {
    let mut r = CheckRecord::new(CheckId::H2_6);
    for (k, &beta) in betas.iter().enumerate() {
        r.samples += 1;
        match solve_constant_input(m, beta, None) {
            Ok(eq) => {
                if let Some((i, v)) = eq.x_star.iter().enumerate().find(|(_, v)| !(**v > STRONG_POSITIVITY)) {
                    r.violate(Counterexample {
                        sample_index: k,
                        point: eq.x_star.clone(),
                        partner: None,
                        quantity: format!("x*_beta component {} at beta = {beta}", i + 1),
                        value: Some(*v),
                    });
                }
                r.recorded.insert(format!("x_star[beta={beta}]"), eq.x_star);
            }
            Err(e) => r.violate(Counterexample {
                sample_index: k,
                point: Vec::new(),
                partner: None,
                quantity: format!("no equilibrium at beta = {beta}: {e}"),
                value: None,
            }),
        }
    }
    r.finish()
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub model: String,
    pub domain: SampleDomain,
    pub beta_m: BetaM,
    pub betas: Vec<f64>,
    pub concavity_pairs: usize,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn check(&self, id: CheckId) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// True iff no check failed.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn counterexample_count(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

/// Default number of ordered pairs for the concavity check.
pub const DEFAULT_CONCAVITY_PAIRS: usize = 1000;

/// Default β values: a few points above the threshold.
pub fn default_betas(beta_m: f64) -> Vec<f64> {
    vec![1.1 * beta_m + 0.1, 2.0 * beta_m + 1.0, 10.0 * beta_m + 10.0]
}

/// Run every H2 check. Failing hypotheses are verdicts; only a `β <= β_m`
/// in `betas` is an error.
pub fn check_h2(m: &SystemModel, d: &SampleDomain, betas: &[f64]) -> Result<VerificationReport, VerifyError> {
    d.validate()?;
    if d.dim() != m.dim() {
        return Err(VerifyError::Domain(format!("domain has dimension {}, model {}", d.dim(), m.dim())));
    }
    let (h2_5, beta_m) = check_h2_5(m);
    if let Some(BetaM::Value(bm)) = beta_m {
        if let Some(&beta) = betas.iter().find(|b| !(**b > bm)) {
            return Err(VerifyError::BetaBelowThreshold { beta, beta_m: bm });
        }
    }
    let boundary = check_positivity_boundary(m, d);
    let h2_6 = match beta_m {
        Some(BetaM::Value(_)) if !betas.is_empty() => check_h2_6(m, betas),
        Some(BetaM::Value(_)) => CheckRecord::not_checked(CheckId::H2_6, "no beta values given"),
        _ => CheckRecord::not_checked(CheckId::H2_6, "beta_m infeasible"),
    };
    let checks = vec![
        boundary.h2_1,
        check_h2_2(m),
        check_cooperativity(m, d),
        check_concavity(m, d, DEFAULT_CONCAVITY_PAIRS),
        h2_5,
        h2_6,
        boundary.positivity,
    ];
    Ok(VerificationReport {
        schema_version: SCHEMA_VERSION,
        model: m.name().into(),
        domain: d.clone(),
        beta_m: beta_m.unwrap_or(BetaM::Infeasible),
        betas: betas.to_vec(),
        concavity_pairs: DEFAULT_CONCAVITY_PAIRS,
        checks,
    })
}

/// Order preservation for the constant-input field `β f + c`: from
/// `x0 <= y0`, check `x(t) <= y(t) + 1e-7` at `samples` equally spaced
/// times in `(0, horizon]`.
pub fn check_order_preservation(
    m: &SystemModel,
    beta: f64,
    x0: &[f64],
    y0: &[f64],
    horizon: f64,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<CheckRecord, VerifyError> {
    if x0.len() != y0.len() || x0.iter().zip(y0).any(|(a, b)| !(a <= b)) {
        return Err(VerifyError::Unordered);
    }
    let samples = samples.max(1);
    let cfg = cfg.with_dt_out(horizon / samples as f64);
    let tx = integrate_constant_input(m, beta, x0, 0.0, horizon, &cfg)?;
    let ty = integrate_constant_input(m, beta, y0, 0.0, horizon, &cfg)?;
    let mut r = CheckRecord::new(CheckId::OrderPreservation);
    for (k, ((t, a), b)) in tx.times.iter().zip(&tx.states).zip(&ty.states).enumerate().skip(1) {
        r.samples += 1;
        if let Some((i, gap)) = a.iter().zip(b).map(|(p, q)| p - q).enumerate().find(|(_, g)| *g > ORDER_TOL) {
            r.violate(Counterexample {
                sample_index: k,
                point: a.clone(),
                partner: Some(b.clone()),
                quantity: format!("x_{}(t) - y_{}(t) at t = {t}", i + 1, i + 1),
                value: Some(gap),
            });
        }
    }
    Ok(r.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GasSettings {
    pub ic_count: usize,
    pub horizon: f64,
    pub tol: f64,
    pub window: f64,
    pub config: IntegratorConfig,
}

impl GasSettings {
    pub fn new(ic_count: usize, horizon: f64, tol: f64, window: f64, config: IntegratorConfig) -> Self {
        GasSettings { ic_count, horizon, tol, window, config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GasEvidence {
    pub record: CheckRecord,
    pub initial_conditions: Vec<Vec<f64>>,
    /// Per initial condition: index into `limits`, `None` if not converged.
    pub assignment: Vec<Option<usize>>,
    /// Distinct limits, in order of first appearance.
    pub limits: Vec<Vec<f64>>,
}

/// Strongly positive initial conditions: the first `count` samples of `d`
/// with every component `> 0`.
pub fn strongly_positive_ics(d: &SampleDomain, count: usize) -> Vec<Vec<f64>> {
    d.samples().into_iter().filter(|x| x.iter().all(|v| *v > 0.0)).take(count).collect()
}

/// Integrate from many strongly positive initial conditions and check that
/// every run converges and all limits coincide within `tol`.
pub fn gas_evidence(m: &SystemModel, sc: Scenario, d: &SampleDomain, s: &GasSettings) -> Result<GasEvidence, VerifyError> {
    d.validate()?;
    if s.ic_count == 0 {
        return Err(VerifyError::Domain("ic_count must be at least 1".into()));
    }
    let ics = strongly_positive_ics(d, s.ic_count);
    let runs: Vec<Result<Option<Vec<f64>>, String>> = ics
        .par_iter()
        .map(|x0| {
            integrate(m, sc, x0, 0.0, s.horizon, &s.config)
                .map(|tr| detect_convergence(&tr, s.tol, s.window))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut r = CheckRecord::new(CheckId::Gas);
    let mut limits: Vec<Vec<f64>> = Vec::new();
    let mut assignment = Vec::with_capacity(ics.len());
    for (k, (x0, run)) in ics.iter().zip(runs).enumerate() {
        r.samples += 1;
        match run {
            Ok(Some(lim)) => {
                let idx = match limits.iter().position(|l| dist_inf(l, &lim) <= s.tol) {
                    Some(i) => i,
                    None => {
                        limits.push(lim.clone());
                        limits.len() - 1
                    }
                };
                if idx != 0 {
                    r.violate(Counterexample {
                        sample_index: k,
                        point: x0.clone(),
                        partner: Some(lim.clone()),
                        quantity: "limit differs from the first limit (inf-distance)".into(),
                        value: Some(dist_inf(&limits[0], &lim)),
                    });
                }
                assignment.push(Some(idx));
            }
            Ok(None) => {
                r.violate(Counterexample {
                    sample_index: k,
                    point: x0.clone(),
                    partner: None,
                    quantity: format!("no convergence within tol {} over window {}", s.tol, s.window),
                    value: None,
                });
                assignment.push(None);
            }
            Err(msg) => {
                r.violate(Counterexample {
                    sample_index: k,
                    point: x0.clone(),
                    partner: None,
                    quantity: format!("integration failed: {msg}"),
                    value: None,
                });
                assignment.push(None);
            }
        }
    }
    for (i, l) in limits.iter().enumerate() {
        r.recorded.insert(format!("limit_{}", i + 1), l.clone());
    }
    Ok(GasEvidence { record: r.finish(), initial_conditions: ics, assignment, limits })
}
