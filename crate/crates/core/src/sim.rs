//! Time integration of open-loop, closed-loop and switched scenarios.
//!
//! Two explicit schemes: classical RK4 with a fixed step and the
//! Dormand–Prince 5(4) embedded pair with step-size control. Output is dense:
//! states at every multiple of `dt_out` come from the pair's 4th-order
//! continuous extension (cubic Hermite for RK4) between accepted steps.

use serde::Serialize;

use crate::equilibrium::{dist_inf, norm_inf};
use crate::error::{EvalError, SimError};
use crate::model::{Dynamics, Scenario, SystemModel};

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
pub const DEFAULT_DT_OUT: f64 = 0.05;
pub const DEFAULT_H_INIT: f64 = 1e-4;
pub const DEFAULT_H_MIN: f64 = 1e-12;
pub const DEFAULT_H_MAX: f64 = 0.5;
pub const DEFAULT_MAX_STEPS: usize = 50_000_000;
/// Negative components above this are integrator noise and clamped to 0.
pub const NEGATIVE_TOL: f64 = 1e-7;

const SAFETY: f64 = 0.9;
const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    FixedRk4 { h: f64 },
    AdaptiveRk45 { rtol: f64, atol: f64, h_init: f64, h_min: f64, h_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt_out: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::adaptive(DEFAULT_RTOL, DEFAULT_ATOL)
    }
}

impl IntegratorConfig {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk45 { rtol, atol, h_init: DEFAULT_H_INIT, h_min: DEFAULT_H_MIN, h_max: DEFAULT_H_MAX },
            dt_out: DEFAULT_DT_OUT,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn rk4(h: f64) -> Self {
        IntegratorConfig { method: Method::FixedRk4 { h }, dt_out: DEFAULT_DT_OUT, max_steps: DEFAULT_MAX_STEPS }
    }

    /// Defaults per model. S2's steep Hill term needs a tighter setting.
    pub fn for_model(m: &SystemModel) -> Self {
        if m.is_builtin() && m.name() == "S2" {
            IntegratorConfig::adaptive(1e-9, DEFAULT_ATOL).with_h_max(0.05)
        } else {
            IntegratorConfig::default()
        }
    }

    pub fn with_dt_out(mut self, dt_out: f64) -> Self {
        self.dt_out = dt_out;
        self
    }

    pub fn with_h_max(mut self, h_max_new: f64) -> Self {
        if let Method::AdaptiveRk45 { ref mut h_max, .. } = self.method {
            *h_max = h_max_new;
        }
        self
    }

    pub fn with_rtol(mut self, rtol_new: f64) -> Self {
        if let Method::AdaptiveRk45 { ref mut rtol, .. } = self.method {
            *rtol = rtol_new;
        }
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: &str| Err(SimError::Config(s.into()));
        if !(self.dt_out > 0.0 && self.dt_out.is_finite()) {
            return bad("dt_out must be positive");
        }
        match self.method {
            Method::FixedRk4 { h } if !(h > 0.0 && h.is_finite()) => bad("step must be positive"),
            Method::AdaptiveRk45 { rtol, atol, h_init, h_min, h_max } => {
                if !(rtol > 0.0 && atol > 0.0) {
                    bad("tolerances must be positive")
                } else if !(h_min > 0.0 && h_min <= h_max && h_init > 0.0) {
                    bad("step bounds must satisfy 0 < h_min <= h_max, h_init > 0")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Which field a trajectory was integrated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunField {
    Scenario { scenario: Scenario },
    ConstantInput { beta: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl IntegratorStats {
    fn absorb(&mut self, o: IntegratorStats) {
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

/// Sampled solution. `inputs[k]` is the realized input at `times[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
    pub field: RunField,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// Smallest component over all states.
    pub fn min_component(&self) -> f64 {
        self.states.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm(&self) -> f64 {
        self.states.iter().map(|s| norm_inf(s)).fold(0.0, f64::max)
    }
}

type Rhs<'a> = dyn FnMut(&[f64], &mut [f64]) -> Result<(), EvalError> + 'a;

/// Where dense output goes: sample times are `origin + k·dt` inside the span.
struct OutputGrid {
    origin: f64,
    dt: f64,
}

impl OutputGrid {
    fn first_index_after(&self, t: f64) -> u64 {
        let k = ((t - self.origin) / self.dt).floor();
        let mut k = if k < 0.0 { 0 } else { k as u64 };
        while self.time(k) <= t {
            k += 1;
        }
        k
    }

    fn time(&self, k: u64) -> f64 {
        self.origin + k as f64 * self.dt
    }
}

fn clamp_negatives(t: f64, x: &mut [f64]) -> Result<bool, SimError> {
    let mut changed = false;
    for (i, v) in x.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(SimError::NonFinite(t));
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_TOL {
                return Err(SimError::Positivity { t, component: i + 1, value: *v });
            }
            *v = 0.0;
            changed = true;
        }
    }
    Ok(changed)
}

fn hermite(t0: f64, x0: &[f64], f0: &[f64], t1: f64, x1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..x0.len())
        .map(|i| h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i])
        .collect()
}

/// Dormand–Prince continuous extension (4th order) on `[t0, t0 + h]`,
/// with `r5 = h Σ d_j k_j`.
#[allow(clippy::too_many_arguments)]
fn dopri_dense(h: f64, x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], r5: &[f64], s: f64) -> Vec<f64> {
    let s1 = 1.0 - s;
    (0..x0.len())
        .map(|i| {
            let diff = x1[i] - x0[i];
            let bspl = h * f0[i] - diff;
            let c4 = diff - h * f1[i] - bspl;
            x0[i] + s * (diff + s1 * (bspl + s * (c4 + s1 * r5[i])))
        })
        .collect()
}

/// Dormand–Prince 5(4) tableau.
mod dopri {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Fifth-order minus embedded fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    /// Dense-output weights.
    pub const D: [f64; 7] = [
        -12715105075.0 / 11282082432.0,
        0.0,
        87487479700.0 / 32700410799.0,
        -10690763975.0 / 1880347072.0,
        701980252875.0 / 199316789632.0,
        -1453857185.0 / 822651844.0,
        69997945.0 / 29380423.0,
    ];
}

struct Engine<'a, 'r> {
    rhs: &'a mut Rhs<'r>,
    stats: IntegratorStats,
}

impl Engine<'_, '_> {
    fn eval(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        self.stats.evaluations += 1;
        (self.rhs)(x, out)?;
        Ok(())
    }

    fn rk4_step(&mut self, x: &[f64], f0: &[f64], h: f64, out: &mut [f64]) -> Result<(), SimError> {
        let n = x.len();
        let mut tmp = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * f0[i];
        }
        self.eval(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.eval(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.eval(&tmp, &mut k4)?;
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (f0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }

    /// One Dormand–Prince attempt. Writes the 5th-order solution and its
    /// derivative (FSAL stage) and the dense-output term; returns the error
    /// estimate's ∞-norm.
    fn dopri_step(
        &mut self,
        x: &[f64],
        f0: &[f64],
        h: f64,
        out: &mut [f64],
        f_out: &mut [f64],
        r5: &mut [f64],
    ) -> Result<f64, SimError> {
        let n = x.len();
        let mut k: Vec<Vec<f64>> = vec![f0.to_vec()];
        let mut tmp = vec![0.0; n];
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    acc += dopri::A[s][j] * kj[i];
                }
                tmp[i] = x[i] + h * acc;
            }
            let mut ks = vec![0.0; n];
            self.eval(&tmp, &mut ks)?;
            if s == 6 {
                out.copy_from_slice(&tmp);
            }
            k.push(ks);
        }
        f_out.copy_from_slice(&k[6]);
        let mut err = 0.0f64;
        for i in 0..n {
            let e: f64 = (0..7).map(|s| dopri::E[s] * k[s][i]).sum();
            err = err.max((h * e).abs());
            r5[i] = h * (0..7).map(|s| dopri::D[s] * k[s][i]).sum::<f64>();
        }
        debug_assert!(dopri::C[6] == 1.0);
        Ok(err)
    }

    /// Integrate from `(t_start, x0)` to `t_end`, emitting dense samples
    /// at grid times strictly inside `(t_start, t_end)` and the endpoint.
    fn run(
        &mut self,
        x0: &[f64],
        t_start: f64,
        t_end: f64,
        cfg: &IntegratorConfig,
        grid: &OutputGrid,
        emit: &mut dyn FnMut(f64, &[f64]),
    ) -> Result<Vec<f64>, SimError> {
        let n = x0.len();
        let merge = 1e-9 * grid.dt;
        let mut t = t_start;
        let mut x = x0.to_vec();
        let mut fx = vec![0.0; n];
        self.eval(&x, &mut fx)?;
        let mut next_k = grid.first_index_after(t_start + merge);

        let mut h = match cfg.method {
            Method::FixedRk4 { h } => h,
            Method::AdaptiveRk45 { h_init, h_max, .. } => h_init.min(h_max),
        };
        let mut x_new = vec![0.0; n];
        let mut f_new = vec![0.0; n];
        let mut r5 = vec![0.0; n];

        while t < t_end {
            if self.stats.steps >= cfg.max_steps {
                return Err(SimError::StepUnderflow { t, h });
            }
            let remaining = t_end - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let h_try = if last { remaining } else { h };
            match cfg.method {
                Method::FixedRk4 { .. } => {
                    self.rk4_step(&x, &fx, h_try, &mut x_new)?;
                    let t_new = if last { t_end } else { t + h_try };
                    clamp_negatives(t_new, &mut x_new)?;
                    self.eval(&x_new, &mut f_new)?;
                    self.stats.steps += 1;
                    self.emit_between(grid, &mut next_k, t, &x, &fx, t_new, &x_new, &f_new, None, t_end, merge, emit);
                    t = t_new;
                }
                Method::AdaptiveRk45 { rtol, atol, h_min, h_max, .. } => {
                    let err = self.dopri_step(&x, &fx, h_try, &mut x_new, &mut f_new, &mut r5)?;
                    let scale = atol + rtol * norm_inf(&x).max(norm_inf(&x_new));
                    let ratio = err / scale;
                    if !ratio.is_finite() {
                        self.stats.rejected += 1;
                        h = h_try * FACTOR_MIN;
                        if h < h_min {
                            return Err(SimError::StepUnderflow { t, h });
                        }
                        continue;
                    }
                    let factor = if ratio == 0.0 {
                        FACTOR_MAX
                    } else {
                        (SAFETY * ratio.powf(-0.2)).clamp(FACTOR_MIN, FACTOR_MAX)
                    };
                    if ratio > 1.0 {
                        self.stats.rejected += 1;
                        h = h_try * factor.min(1.0);
                        if h < h_min {
                            return Err(SimError::StepUnderflow { t, h });
                        }
                        continue;
                    }
                    let t_new = if last { t_end } else { t + h_try };
                    if clamp_negatives(t_new, &mut x_new)? {
                        self.eval(&x_new, &mut f_new)?;
                    }
                    self.stats.steps += 1;
                    self.emit_between(grid, &mut next_k, t, &x, &fx, t_new, &x_new, &f_new, Some(&r5), t_end, merge, emit);
                    t = t_new;
                    h = (h_try * factor).clamp(h_min, h_max);
                }
            }
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut fx, &mut f_new);
        }
        emit(t_end, &x);
        Ok(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_between(
        &self,
        grid: &OutputGrid,
        next_k: &mut u64,
        t0: f64,
        x0: &[f64],
        f0: &[f64],
        t1: f64,
        x1: &[f64],
        f1: &[f64],
        r5: Option<&[f64]>,
        t_end: f64,
        merge: f64,
        emit: &mut dyn FnMut(f64, &[f64]),
    ) {
        loop {
            let ts = grid.time(*next_k);
            // Grid points at (or within `merge` of) the span end are emitted as the endpoint.
            if ts > t1 || ts >= t_end - merge {
                return;
            }
            let mut xs = match r5 {
                Some(r5) => dopri_dense(t1 - t0, x0, f0, x1, f1, r5, (ts - t0) / (t1 - t0)),
                None => hermite(t0, x0, f0, t1, x1, f1, ts),
            };
            for v in xs.iter_mut() {
                if *v < 0.0 && *v >= -NEGATIVE_TOL {
                    *v = 0.0;
                }
            }
            emit(ts, &xs);
            *next_k += 1;
        }
    }
}

fn check_inputs(m: &SystemModel, x0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<(), SimError> {
    if x0.len() != m.dim() {
        return Err(SimError::Dimension { expected: m.dim(), got: x0.len() });
    }
    if !x0.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(SimError::InvalidInitialState);
    }
    if !(t1 > t0 && t0.is_finite() && t1.is_finite()) {
        return Err(SimError::TimeSpan { t0, t1 });
    }
    cfg.validate()
}

fn realized_input(m: &SystemModel, d: Dynamics, x: &[f64]) -> f64 {
    match d {
        Dynamics::OpenLoop(u) => u,
        Dynamics::ConstantInput(beta) => beta,
        Dynamics::ClosedLoop(gamma) => m.psi(x).map_or(f64::NAN, |p| gamma * p),
    }
}

struct Phase {
    dynamics: Dynamics,
    t_end: f64,
}

fn run_phases(
    m: &SystemModel,
    phases: &[Phase],
    x0: &[f64],
    t0: f64,
    cfg: &IntegratorConfig,
    field: RunField,
) -> Result<Trajectory, SimError> {
    let grid = OutputGrid { origin: t0, dt: cfg.dt_out };
    let first = phases.iter().find(|p| p.t_end > t0).unwrap_or(&phases[0]);
    let mut tr = Trajectory {
        times: vec![t0],
        states: vec![x0.to_vec()],
        inputs: vec![realized_input(m, first.dynamics, x0)],
        field,
        stats: IntegratorStats::default(),
    };
    let mut x = x0.to_vec();
    let mut t = t0;
    for (pi, phase) in phases.iter().enumerate() {
        if phase.t_end <= t {
            continue;
        }
        let d = phase.dynamics;
        // The sample at a phase boundary belongs to the next phase's input.
        let label = phases.get(pi + 1).map(|p| p.dynamics).unwrap_or(d);
        let mut rhs = |y: &[f64], out: &mut [f64]| m.rhs_into(d, y, out);
        let mut engine = Engine { rhs: &mut rhs, stats: IntegratorStats::default() };
        let t_end = phase.t_end;
        let mut emit = |ts: f64, xs: &[f64]| {
            let dd = if ts >= t_end { label } else { d };
            tr.times.push(ts);
            tr.states.push(xs.to_vec());
            tr.inputs.push(realized_input(m, dd, xs));
        };
        x = engine.run(&x, t, t_end, cfg, &grid, &mut emit)?;
        tr.stats.absorb(engine.stats);
        t = t_end;
    }
    debug_assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
    Ok(tr)
}

/// Integrate a scenario from `x0 >= 0` over `[t0, t1]`.
pub fn integrate(
    m: &SystemModel,
    sc: Scenario,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    check_inputs(m, x0, t0, t1, cfg)?;
    sc.validate().map_err(SimError::Scenario)?;
    let phases = match sc {
        Scenario::OpenLoop { u } => vec![Phase { dynamics: Dynamics::OpenLoop(u), t_end: t1 }],
        Scenario::ClosedLoop { gamma } => vec![Phase { dynamics: Dynamics::ClosedLoop(gamma), t_end: t1 }],
        Scenario::Switched { u, gamma, t_switch } => vec![
            Phase { dynamics: Dynamics::OpenLoop(u), t_end: t_switch.min(t1) },
            Phase { dynamics: Dynamics::ClosedLoop(gamma), t_end: t1 },
        ],
    };
    run_phases(m, &phases, x0, t0, cfg, RunField::Scenario { scenario: sc })
}

/// Integrate the constant-input field `β f(x) + c`.
pub fn integrate_constant_input(
    m: &SystemModel,
    beta: f64,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    check_inputs(m, x0, t0, t1, cfg)?;
    let phases = [Phase { dynamics: Dynamics::ConstantInput(beta), t_end: t1 }];
    run_phases(m, &phases, x0, t0, cfg, RunField::ConstantInput { beta })
}

/// Final state if the trajectory stayed within `tol` (∞-norm) of it over
/// the trailing `window`.
pub fn detect_convergence(tr: &Trajectory, tol: f64, window: f64) -> Option<Vec<f64>> {
    let (&t_end, &t_first) = (tr.times.last()?, tr.times.first()?);
    if !(window < t_end - t_first) {
        return None;
    }
    let end = tr.final_state();
    let from = tr.index_at(t_end - window);
    let worst = tr.states[from..].iter().map(|s| dist_inf(s, end)).fold(0.0, f64::max);
    (worst <= tol).then(|| end.to_vec())
}

/// Local maxima of `states[..][component]` (0-based component) with
/// parabolic refinement through the three neighbouring samples.
pub fn peak_amplitudes(tr: &Trajectory, component: usize) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    if tr.len() < 3 || component >= tr.dim() {
        return peaks;
    }
    let y = |k: usize| tr.states[k][component];
    for k in 1..tr.len() - 1 {
        let (y0, y1, y2) = (y(k - 1), y(k), y(k + 1));
        if !(y1 > y0 && y1 >= y2) {
            continue;
        }
        let (t0, t1, t2) = (tr.times[k - 1], tr.times[k], tr.times[k + 1]);
        // Vertex of the interpolating parabola (non-uniform spacing).
        let d0 = (y1 - y0) / (t1 - t0);
        let d1 = (y2 - y1) / (t2 - t1);
        let curv = (d1 - d0) / (t2 - t0);
        if curv >= 0.0 {
            peaks.push((t1, y1));
            continue;
        }
        let b = d0 - curv * (t0 + t1);
        let tv = (-b / (2.0 * curv)).clamp(t0, t2);
        let yv = y0 + d0 * (tv - t0) + curv * (tv - t0) * (tv - t1);
        peaks.push((tv, yv));
    }
    peaks
}

/// Benettin estimate of the largest Lyapunov exponent with a companion
/// trajectory offset by 1e-8 (∞-norm), renormalized every `renorm_dt`.
/// Both trajectories are advanced as one joint system so they share steps.
pub fn largest_lyapunov_exponent(
    m: &SystemModel,
    sc: Scenario,
    x0: &[f64],
    t_transient: f64,
    t_measure: f64,
    renorm_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, SimError> {
    const DELTA0: f64 = 1e-8;
    let d = match sc {
        Scenario::OpenLoop { u } => Dynamics::OpenLoop(u),
        Scenario::ClosedLoop { gamma } => Dynamics::ClosedLoop(gamma),
        Scenario::Switched { .. } => return Err(SimError::Scenario("switched scenarios have no single field".into())),
    };
    sc.validate().map_err(SimError::Scenario)?;
    if !(t_measure > 0.0 && renorm_dt > 0.0 && t_transient >= 0.0) {
        return Err(SimError::TimeSpan { t0: t_transient, t1: t_measure });
    }
    check_inputs(m, x0, 0.0, t_measure, cfg)?;
    let n = m.dim();
    let quiet = OutputGrid { origin: 0.0, dt: f64::INFINITY };
    let mut sink = |_: f64, _: &[f64]| {};

    let mut x = x0.to_vec();
    if t_transient > 0.0 {
        let mut rhs = |y: &[f64], out: &mut [f64]| m.rhs_into(d, y, out);
        let mut engine = Engine { rhs: &mut rhs, stats: IntegratorStats::default() };
        x = engine.run(&x, 0.0, t_transient, cfg, &quiet, &mut sink)?;
    }

    let mut z: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
    for v in &mut z[n..] {
        *v += DELTA0;
    }
    let mut joint = |y: &[f64], out: &mut [f64]| {
        let (a, b) = out.split_at_mut(n);
        m.rhs_into(d, &y[..n], a)?;
        m.rhs_into(d, &y[n..], b)
    };
    let mut engine = Engine { rhs: &mut joint, stats: IntegratorStats::default() };
    let intervals = (t_measure / renorm_dt).round().max(1.0) as usize;
    let mut sum = 0.0;
    let mut t = t_transient;
    for _ in 0..intervals {
        z = engine.run(&z, t, t + renorm_dt, cfg, &quiet, &mut sink)?;
        t += renorm_dt;
        let (a, b) = z.split_at_mut(n);
        let dist = dist_inf(a, b);
        if !(dist > 0.0 && dist.is_finite()) {
            return Err(SimError::Companion(t));
        }
        sum += (dist / DELTA0).ln();
        for i in 0..n {
            b[i] = a[i] + (b[i] - a[i]) * DELTA0 / dist;
            if b[i] < 0.0 {
                b[i] = 0.0;
            }
        }
    }
    Ok(sum / (intervals as f64 * renorm_dt))
}
