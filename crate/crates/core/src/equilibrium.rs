//! Equilibria of the constant-input, closed-loop and open-loop fields, and
//! local stability classification.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EvalError, SolveError};
use crate::metzler::{dominant_eigenpair, is_metzler, SquareMatrix};
use crate::model::{Dynamics, Scenario, SystemModel};
use crate::sampling::SampleDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Newton,
    BisectionChain,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub x_star: Vec<f64>,
    /// ∞-norm of the defining equation at `x_star`.
    pub residual: f64,
    pub method: Method,
    pub iterations: usize,
}

/// Newton stops when `‖F‖∞ <= NEWTON_TOL · (1 + ‖c‖∞)`.
pub const NEWTON_TOL: f64 = 1e-12;
/// Returned roots always satisfy `‖F‖∞ <= ACCEPT_TOL · (1 + ‖c‖∞)`.
pub const ACCEPT_TOL: f64 = 1e-10;
pub const STEP_TOL: f64 = 1e-14;
pub const MAX_HALVINGS: usize = 30;
pub const MAX_NEWTON_ITER: usize = 200;
pub const POSITIVE_FLOOR: f64 = 1e-12;
pub const DEDUP_RADIUS: f64 = 1e-6;
pub const STABILITY_MARGIN: f64 = 1e-7;
pub const EQUILIBRIUM_PRECONDITION: f64 = 1e-8;

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn accept_scale(m: &SystemModel) -> f64 {
    1.0 + norm_inf(m.c())
}

struct NewtonOutcome {
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    singular: bool,
}

/// Damped Newton with step halving and a lower clamp on the iterates.
fn damped_newton(
    residual: &(dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Sync),
    jacobian: &(dyn Fn(&[f64]) -> Result<SquareMatrix, EvalError> + Sync),
    start: &[f64],
    floor: f64,
    scale: f64,
) -> Option<NewtonOutcome> {
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = x.max(floor));
    let mut x = start.to_vec();
    clamp(&mut x);
    let mut fx = residual(&x).ok()?;
    let mut r = norm_inf(&fx);
    let mut singular = false;
    for it in 0..MAX_NEWTON_ITER {
        if r <= NEWTON_TOL * scale {
            return Some(NewtonOutcome { x, residual: r, iterations: it, singular });
        }
        let j = jacobian(&x).ok()?;
        let rhs = DVector::from_iterator(fx.len(), fx.iter().map(|v| -v));
        let Some(dx) = j.to_nalgebra().lu().solve(&rhs) else {
            singular = true;
            break;
        };
        if dx.iter().any(|v| !v.is_finite()) {
            singular = true;
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            clamp(&mut trial);
            if let Ok(ft) = residual(&trial) {
                let rt = norm_inf(&ft);
                if rt < r {
                    accepted = Some((trial, ft, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, ft, rt)) = accepted else {
            break;
        };
        let step = dist_inf(&trial, &x);
        x = trial;
        fx = ft;
        r = rt;
        if step < STEP_TOL {
            return Some(NewtonOutcome { x, residual: r, iterations: it + 1, singular });
        }
    }
    Some(NewtonOutcome { x, residual: r, iterations: MAX_NEWTON_ITER, singular })
}

/// Deterministic fallback starts: all-ones scaled by 2^-3 .. 2^4.
fn fallback_starts(n: usize) -> Vec<Vec<f64>> {
    (-3..=4).map(|k| vec![2f64.powi(k); n]).collect()
}

/// Root of `β f(x) + c = 0` by damped Newton, iterates kept `>= 1e-12`.
pub fn solve_constant_input(m: &SystemModel, beta: f64, guess: Option<&[f64]>) -> Result<EquilibriumResult, SolveError> {
    if !(beta > 0.0) {
        return Err(SolveError::NonPositiveParameter(beta));
    }
    let n = m.dim();
    let residual = |x: &[f64]| m.rhs_constant_input(beta, x);
    let jacobian = |x: &[f64]| Ok(m.jacobian(x)?.scale(beta));
    let scale = accept_scale(m);
    let mut starts = vec![guess.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; n])];
    starts.extend(fallback_starts(n));

    let mut best = f64::INFINITY;
    let mut singular = false;
    for start in &starts {
        if start.len() != n {
            return Err(SolveError::Eval(EvalError::VariableOutOfRange { index: start.len(), dim: n }));
        }
        let Some(out) = damped_newton(&residual, &jacobian, start, POSITIVE_FLOOR, scale) else {
            continue;
        };
        if out.residual <= ACCEPT_TOL * scale {
            return Ok(EquilibriumResult { x_star: out.x, residual: out.residual, method: Method::Newton, iterations: out.iterations });
        }
        if out.residual < best {
            best = out.residual;
            singular = out.singular;
        }
    }
    if singular {
        Err(SolveError::SingularJacobian)
    } else {
        Err(SolveError::NoConvergence { best_residual: best })
    }
}

/// The equilibrium `x*_γ` targeted by the feedback `u = γψ(x)`, i.e. `γ f(x) + c = 0`.
pub fn closed_loop_equilibrium(m: &SystemModel, gamma: f64) -> Result<EquilibriumResult, SolveError> {
    solve_constant_input(m, gamma, None)
}

/// Newton on the open-loop field `u f(x) + c ψ(x)` from explicit starts.
/// Iterates are kept `>= 0`, since open-loop equilibria may sit on faces.
pub fn solve_open_loop(m: &SystemModel, u: f64, start: &[f64]) -> Option<EquilibriumResult> {
    let residual = |x: &[f64]| m.rhs_open_loop(u, x);
    let jacobian = |x: &[f64]| m.rhs_jacobian(Dynamics::OpenLoop(u), x);
    let scale = accept_scale(m);
    let out = damped_newton(&residual, &jacobian, start, 0.0, scale)?;
    (out.residual <= ACCEPT_TOL * scale && out.x.iter().all(|v| v.is_finite())).then(|| EquilibriumResult {
        x_star: out.x,
        residual: out.residual,
        method: Method::Newton,
        iterations: out.iterations,
    })
}

/// Deduplicate by ∞-distance, keep first occurrences, sort lexicographically.
pub fn dedup_roots(roots: impl IntoIterator<Item = EquilibriumResult>, radius: f64) -> Vec<EquilibriumResult> {
    let mut out: Vec<EquilibriumResult> = Vec::new();
    for r in roots {
        if !out.iter().any(|o| dist_inf(&o.x_star, &r.x_star) < radius) {
            out.push(r);
        }
    }
    out.sort_by(|a, b| {
        a.x_star
            .iter()
            .zip(&b.x_star)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// All open-loop equilibria reachable by Newton from the first `starts`
/// sample points of `d`.
pub fn enumerate_open_loop_equilibria(m: &SystemModel, u: f64, d: &SampleDomain, starts: usize) -> Vec<EquilibriumResult> {
    let pts: Vec<Vec<f64>> = d.samples().into_iter().take(starts).collect();
    let found: Vec<Option<EquilibriumResult>> = pts.par_iter().map(|p| solve_open_loop(m, u, p)).collect();
    dedup_roots(found.into_iter().flatten(), DEDUP_RADIUS)
}

/// Multi-start constant-input solve: every converged root from the first
/// `starts` samples of `d`, deduplicated.
pub fn constant_input_roots(m: &SystemModel, beta: f64, d: &SampleDomain, starts: usize) -> Vec<EquilibriumResult> {
    let residual = |x: &[f64]| m.rhs_constant_input(beta, x);
    let jacobian = |x: &[f64]| Ok(m.jacobian(x)?.scale(beta));
    let scale = accept_scale(m);
    let pts: Vec<Vec<f64>> = d.samples().into_iter().take(starts).collect();
    let found: Vec<Option<EquilibriumResult>> = pts
        .par_iter()
        .map(|p| {
            let out = damped_newton(&residual, &jacobian, p, POSITIVE_FLOOR, scale)?;
            (out.residual <= ACCEPT_TOL * scale).then(|| EquilibriumResult {
                x_star: out.x,
                residual: out.residual,
                method: Method::Newton,
                iterations: out.iterations,
            })
        })
        .collect();
    dedup_roots(found.into_iter().flatten(), DEDUP_RADIUS)
}

fn s2_param(m: &SystemModel, key: &str) -> Result<f64, SolveError> {
    m.param(key).ok_or_else(|| SolveError::WrongModel(m.name().into()))
}

/// Scalar route to the equilibrium of `β f₂(x) + c₂ ψ₂(x) = 0` for the
/// Goodwin-type example: bisection on
/// `G(x₃) = α₂ + μ₂(μ₁ + α₁K)/(μ₁ + (α₁ + k₂)K) − x₃`, `K = k₁βl(1 + x₃ⁿ) + 1`,
/// then back-substitution for `x₁`, `x₂`.
pub fn s2_x3_fixed_point(m: &SystemModel, beta: f64) -> Result<EquilibriumResult, SolveError> {
    if !(beta > 0.0) {
        return Err(SolveError::NonPositiveParameter(beta));
    }
    if m.dim() != 3 {
        return Err(SolveError::WrongModel(m.name().into()));
    }
    let l = s2_param(m, "l")?;
    let mu1 = s2_param(m, "mu1")?;
    let mu2 = s2_param(m, "mu2")?;
    let k1 = s2_param(m, "k1")?;
    let k2 = s2_param(m, "k2")?;
    let a1 = s2_param(m, "alpha1")?;
    let a2 = s2_param(m, "alpha2")?;
    let hill = s2_param(m, "n")?;

    let big_k = |x3: f64| k1 * beta * l * (1.0 + x3.powf(hill)) + 1.0;
    let g = |x3: f64| {
        let k = big_k(x3);
        a2 + mu2 * (mu1 + a1 * k) / (mu1 + (a1 + k2) * k) - x3
    };
    let (mut lo, mut hi) = (0.0, a2 + mu2 + 1.0);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(SolveError::Bracket { g_lo, g_hi });
    }
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * 1e-3 {
            break;
        }
    }
    let x3 = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let k = big_k(x3);
    let x1 = 1.0 / (beta * l * (1.0 + x3.powf(hill)));
    let x2 = mu1 / k + a1;
    let x_star = vec![x1, x2, x3];
    let residual = norm_inf(&m.rhs_open_loop(beta, &x_star)?);
    Ok(EquilibriumResult { x_star, residual, method: Method::BisectionChain, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
    NotClassifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRecord {
    pub max_real_part: Option<f64>,
    /// `(re, im)` pairs; empty when the spectrum was not computed in full.
    pub eigenvalues: Vec<(f64, f64)>,
    pub verdict: Verdict,
}

/// Roots of `λ² + b λ + c`.
fn quadratic_roots(b: f64, c: f64) -> [(f64, f64); 2] {
    let disc = b * b / 4.0 - c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Stable form: avoid cancellation in the smaller root.
        let r1 = if b >= 0.0 { -b / 2.0 - s } else { -b / 2.0 + s };
        let r2 = if r1 != 0.0 { c / r1 } else { -b - r1 };
        [(r1, 0.0), (r2, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(-b / 2.0, s), (-b / 2.0, -s)]
    }
}

/// Roots of `λ³ + a λ² + b λ + c`: one real root by Cardano / trigonometric
/// form, polished by Newton, then deflation to a quadratic.
fn cubic_roots(a: f64, b: f64, c: f64) -> [(f64, f64); 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let delta = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let t = if p == 0.0 {
        (-q).cbrt()
    } else if delta > 0.0 {
        let s = delta.sqrt();
        (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        r * (arg.acos() / 3.0).cos()
    };
    let mut root = t - a / 3.0;
    for _ in 0..8 {
        let val = ((root + a) * root + b) * root + c;
        let der = (3.0 * root + 2.0 * a) * root + b;
        if der == 0.0 {
            break;
        }
        let next = root - val / der;
        if !next.is_finite() || (next - root).abs() <= 1e-16 * root.abs().max(1.0) {
            if next.is_finite() {
                root = next;
            }
            break;
        }
        root = next;
    }
    let [r2, r3] = quadratic_roots(a + root, b + (a + root) * root);
    [(root, 0.0), r2, r3]
}

/// Full spectrum for `n <= 3` from the characteristic polynomial.
pub fn small_spectrum(j: &SquareMatrix) -> Option<Vec<(f64, f64)>> {
    match j.dim() {
        1 => Some(vec![(j[(0, 0)], 0.0)]),
        2 => {
            let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
            Some(quadratic_roots(-j.trace(), det).to_vec())
        }
        3 => {
            let m = |r: usize, s: usize| j[(r, s)];
            let minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)
                + m(1, 1) * m(2, 2)
                - m(1, 2) * m(2, 1);
            let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
            Some(cubic_roots(-j.trace(), minors, -det).to_vec())
        }
        _ => None,
    }
}

fn verdict_for(max_re: f64) -> Verdict {
    if max_re < -STABILITY_MARGIN {
        Verdict::Stable
    } else if max_re > STABILITY_MARGIN {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    }
}

/// Local stability of an equilibrium from the Jacobian spectrum.
pub fn classify_matrix(j: &SquareMatrix) -> StabilityRecord {
    if let Some(eigs) = small_spectrum(j) {
        let max_re = eigs.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        return StabilityRecord { max_real_part: Some(max_re), eigenvalues: eigs, verdict: verdict_for(max_re) };
    }
    if is_metzler(j, crate::metzler::METZLER_TOL) {
        if let Ok(ep) = dominant_eigenpair(j) {
            return StabilityRecord {
                max_real_part: Some(ep.lambda),
                eigenvalues: Vec::new(),
                verdict: verdict_for(ep.lambda),
            };
        }
    }
    StabilityRecord { max_real_part: None, eigenvalues: Vec::new(), verdict: Verdict::NotClassifiable }
}

/// Classify `x_star` under the given dynamics; it must be an equilibrium
/// to within 1e-8.
pub fn classify_dynamics(m: &SystemModel, dynamics: Dynamics, x_star: &[f64]) -> Result<StabilityRecord, SolveError> {
    let r = norm_inf(&m.rhs(dynamics, x_star)?);
    if !(r <= EQUILIBRIUM_PRECONDITION) {
        return Err(SolveError::NotEquilibrium(r));
    }
    Ok(classify_matrix(&m.rhs_jacobian(dynamics, x_star)?))
}

/// Classify `x_star` under the scenario's terminal dynamics (closed loop
/// for switched scenarios).
pub fn classify_stability(m: &SystemModel, sc: Scenario, x_star: &[f64]) -> Result<StabilityRecord, SolveError> {
    classify_dynamics(m, sc.dynamics_at(f64::INFINITY), x_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s3_closed_form(beta: f64) -> Vec<f64> {
        let (k2, k3, k4) = (0.301, 2.5, 0.56);
        vec![
            (beta * k2 * k3 + k2 - 1.0) / (beta * (1.0 - k2)),
            k2 * k3 / (1.0 - k2),
            (k2 * (k3 - k4) + k4) / (1.0 - k2),
        ]
    }

    #[test]
    fn s1_constant_input_equilibrium() {
        let s1 = SystemModel::builtin("S1").unwrap();
        let r = solve_constant_input(&s1, 0.25, None).unwrap();
        assert!(dist_inf(&r.x_star, &[1.0, 4.0]) < 1e-12);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn s3_constant_input_matches_closed_form() {
        let s3 = SystemModel::builtin("S3").unwrap();
        let r = solve_constant_input(&s3, 2.0, None).unwrap();
        let cf = s3_closed_form(2.0);
        assert!(dist_inf(&r.x_star, &cf) < 1e-10, "{:?} vs {cf:?}", r.x_star);
        assert!((cf[0] - 0.576538).abs() < 1e-6);
        assert!((cf[1] - 1.076538).abs() < 1e-6);
        assert!((cf[2] - 1.636538).abs() < 1e-6);
        let g = closed_loop_equilibrium(&s3, 1.73).unwrap();
        assert!(dist_inf(&g.x_star, &s3_closed_form(1.73)) < 1e-10);
    }

    #[test]
    fn linear_model_root_is_ones() {
        let m = crate::model_file::parse_model_file(
            "system lin\ndim 3\nf1 = -x1\nf2 = -x2\nf3 = -x3\nc = [1, 1, 1]\npsi = 1\n",
        )
        .unwrap();
        let r = solve_constant_input(&m, 1.0, None).unwrap();
        assert!(dist_inf(&r.x_star, &[1.0; 3]) < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        let s1 = SystemModel::builtin("S1").unwrap();
        assert!(matches!(solve_constant_input(&s1, 0.0, None), Err(SolveError::NonPositiveParameter(_))));
        assert!(matches!(closed_loop_equilibrium(&s1, -1.0), Err(SolveError::NonPositiveParameter(_))));
    }

    #[test]
    fn s2_fixed_point_degenerate_exponent() {
        // n = 0 makes K constant and the fixed-point equation affine in x3.
        let s2 = SystemModel::builtin("S2").unwrap().with_param("n", 0.0).unwrap();
        let beta = 1.5;
        let r = s2_x3_fixed_point(&s2, beta).unwrap();
        let p = |k: &str| s2.param(k).unwrap();
        let k = p("k1") * beta * p("l") * 2.0 + 1.0;
        let exact = p("alpha2") + p("mu2") * (p("mu1") + p("alpha1") * k) / (p("mu1") + (p("alpha1") + p("k2")) * k);
        assert!((r.x_star[2] - exact).abs() < 1e-12);
    }

    #[test]
    fn s2_fixed_point_wrong_model() {
        let s3 = SystemModel::builtin("S3").unwrap();
        assert!(matches!(s2_x3_fixed_point(&s3, 1.0), Err(SolveError::WrongModel(_))));
    }

    #[test]
    fn quadratic_and_cubic_roots() {
        let r = quadratic_roots(-3.0, 2.0);
        let mut re: Vec<f64> = r.iter().map(|z| z.0).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 1.0).abs() < 1e-15 && (re[1] - 2.0).abs() < 1e-15);
        // (λ-1)(λ-2)(λ-3)
        let r = cubic_roots(-6.0, 11.0, -6.0);
        let mut re: Vec<f64> = r.iter().map(|z| z.0).collect();
        re.sort_by(f64::total_cmp);
        for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12, "{re:?}");
        }
        // (λ+1)(λ² + 1): roots -1, ±i
        let r = cubic_roots(1.0, 1.0, 1.0);
        assert!(r.iter().any(|z| (z.0 + 1.0).abs() < 1e-12 && z.1 == 0.0));
        assert!(r.iter().filter(|z| z.0.abs() < 1e-12 && (z.1.abs() - 1.0).abs() < 1e-12).count() == 2);
        // triple root
        let r = cubic_roots(3.0, 3.0, 1.0);
        assert!(r.iter().all(|z| (z.0 + 1.0).abs() < 1e-5));
    }

    #[test]
    fn classification_needs_equilibrium() {
        let s1 = SystemModel::builtin("S1").unwrap();
        let sc = Scenario::OpenLoop { u: 0.25 };
        assert!(matches!(classify_stability(&s1, sc, &[1.0, 1.0]), Err(SolveError::NotEquilibrium(_))));
        let rec = classify_stability(&s1, sc, &[5.0, 0.0]).unwrap();
        assert_eq!(rec.verdict, Verdict::Stable);
        let mut eig: Vec<f64> = rec.eigenvalues.iter().map(|z| z.0).collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] + 0.25).abs() < 1e-14);
        assert!((eig[1] - (5.0 / 31.0 - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn closed_loop_s1_is_stable() {
        let s1 = SystemModel::builtin("S1").unwrap();
        let rec = classify_stability(&s1, Scenario::ClosedLoop { gamma: 0.25 }, &[1.0, 4.0]).unwrap();
        assert_eq!(rec.verdict, Verdict::Stable);
        assert!((rec.max_real_part.unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_non_metzler_not_classifiable() {
        let mut j = SquareMatrix::identity(4).scale(-1.0);
        j[(0, 1)] = -1.0;
        assert_eq!(classify_matrix(&j).verdict, Verdict::NotClassifiable);
        let j = SquareMatrix::identity(4).scale(-2.0);
        let rec = classify_matrix(&j);
        assert_eq!(rec.verdict, Verdict::Stable);
        assert!((rec.max_real_part.unwrap() + 2.0).abs() < 1e-12);
    }
}
