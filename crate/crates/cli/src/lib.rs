//! `posfeed` command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or I/O
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use posfeed::equilibrium::{
    classify_dynamics, constant_input_roots, enumerate_open_loop_equilibria, EquilibriumResult, StabilityRecord,
};
use posfeed::io::{write_report_json, write_trajectory_csv, Metadata, RunArtifact};
use posfeed::model::BUILTIN_NAMES;
use posfeed::sim::{integrate, largest_lyapunov_exponent, IntegratorConfig};
use posfeed::verify::{check_h2, compute_beta_m, default_betas, BetaM};
use posfeed::{Dynamics, SampleDomain, Scenario, SystemModel};
use serde::Serialize;

mod reproduce;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

pub(crate) type CliResult<T> = Result<T, Failure>;

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub(crate) fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "posfeed", version, about = "Output-feedback stabilization of uncertain positive systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the built-in models.
    ListModels,
    /// Check the sufficient hypotheses on a sampled box and write a JSON report.
    Verify(VerifyArgs),
    /// Find equilibria for a constant input, a feedback gain, or an open-loop input.
    Equilibria(EquilibriaArgs),
    /// Integrate a scenario and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Estimate the largest Lyapunov exponent.
    Lyapunov(LyapunovArgs),
    /// Regenerate the data behind one of the canonical figures.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// S1, S2, S3 or a model file path.
    #[arg(long)]
    model: String,
    /// Axis interval `a:b`; give once for all axes or once per axis.
    #[arg(long = "box", value_name = "A:B")]
    boxes: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// β values for the equilibrium check (default: three values above β_m).
    #[arg(long = "beta")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = posfeed::sampling::DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = posfeed::sampling::DEFAULT_RANDOM)]
    random: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).multiple(false).args(["beta", "gamma", "u"])))]
struct EquilibriaArgs {
    #[arg(long)]
    model: String,
    /// Constant-input field β f + c.
    #[arg(long)]
    beta: Option<f64>,
    /// Closed loop u = γ ψ(x).
    #[arg(long)]
    gamma: Option<f64>,
    /// Open loop with constant u.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("scenario").required(true).multiple(false).args(["u", "gamma", "switch"])))]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Open loop with `u` until `t`, then feedback with `gamma`.
    #[arg(long, value_name = "U:GAMMA:T")]
    switch: Option<String>,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long, value_name = "T0:T1", allow_hyphen_values = true)]
    t: String,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    dt_out: Option<f64>,
    /// Use fixed-step RK4 with this step instead of the adaptive pair.
    #[arg(long)]
    rk4: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("scenario").required(true).multiple(false).args(["u", "gamma"])))]
struct LyapunovArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long)]
    transient: f64,
    #[arg(long)]
    measure: f64,
    /// Renormalization interval.
    #[arg(long, default_value_t = 1.0)]
    renorm: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    figure: u8,
    #[arg(long)]
    outdir: PathBuf,
}

/// Parse and execute `argv` (including the program name); returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::ListModels => list_models(),
        Command::Verify(a) => verify(a),
        Command::Equilibria(a) => equilibria(a),
        Command::Simulate(a) => simulate(a),
        Command::Lyapunov(a) => lyapunov(a),
        Command::Reproduce(a) => reproduce::run(a.figure, &a.outdir),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            f.code()
        }
    }
}

pub(crate) fn load_model(name: &str) -> CliResult<SystemModel> {
    if BUILTIN_NAMES.contains(&name) {
        return SystemModel::builtin(name).map_err(|e| usage(e.to_string()));
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(usage(format!("unknown model `{name}` (not a builtin and no such file)")));
    }
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{name}: {e}")))?;
    posfeed::parse_model_file(&text).map_err(|e| usage(format!("{name}: {e}")))
}

fn parse_pair(s: &str, what: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(usage(format!("{what} must look like a:b, got `{s}`")));
    }
    let a = parts[0].trim().parse().map_err(|_| usage(format!("bad number in {what} `{s}`")))?;
    let b = parts[1].trim().parse().map_err(|_| usage(format!("bad number in {what} `{s}`")))?;
    Ok((a, b))
}

pub(crate) fn parse_vector(s: &str, n: usize) -> CliResult<Vec<f64>> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("bad vector `{s}`")))?;
    if v.len() != n {
        return Err(usage(format!("expected {n} components, got {}", v.len())));
    }
    if !v.iter().all(|x| x.is_finite() && *x >= 0.0) {
        return Err(usage(format!("initial state `{s}` must be finite and nonnegative")));
    }
    Ok(v)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    write_report_json(value, path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn list_models() -> CliResult<i32> {
    for name in BUILTIN_NAMES {
        let m = SystemModel::builtin(name).map_err(numerical)?;
        let bm = match compute_beta_m(&m).map_err(numerical)? {
            BetaM::Value(v) => format!("{v}"),
            BetaM::Infeasible => "infeasible".into(),
        };
        println!("{name}\tdim {}\tbeta_m {bm}", m.dim());
    }
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs) -> CliResult<i32> {
    let m = load_model(&a.model)?;
    let n = m.dim();
    let intervals = a.boxes.iter().map(|b| parse_pair(b, "--box")).collect::<CliResult<Vec<_>>>()?;
    let (lower, upper): (Vec<f64>, Vec<f64>) = match intervals.len() {
        0 => (vec![0.0; n], vec![posfeed::sampling::DEFAULT_BOX; n]),
        1 => (vec![intervals[0].0; n], vec![intervals[0].1; n]),
        k if k == n => intervals.into_iter().unzip(),
        k => return Err(usage(format!("{k} --box values for a {n}-dimensional model"))),
    };
    let d = SampleDomain { lower, upper, grid_per_axis: a.grid, random_count: a.random, seed: a.seed };
    d.validate().map_err(|e| usage(e.to_string()))?;
    let betas = if a.betas.is_empty() {
        match compute_beta_m(&m).map_err(numerical)? {
            BetaM::Value(bm) => default_betas(bm),
            BetaM::Infeasible => Vec::new(),
        }
    } else {
        a.betas
    };
    let rep = match check_h2(&m, &d, &betas) {
        Ok(r) => r,
        Err(e @ posfeed::VerifyError::BetaBelowThreshold { .. }) => return Err(usage(e.to_string())),
        Err(posfeed::VerifyError::Domain(e)) => return Err(usage(e)),
        Err(e) => return Err(numerical(e)),
    };
    write_json(&rep, &a.out)?;
    for c in &rep.checks {
        println!("{:<12} {:?} ({} samples, {} violations)", c.id.label(), c.verdict, c.samples, c.violations);
    }
    Ok(if rep.all_pass() { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

#[derive(Serialize)]
struct EquilibriumEntry {
    #[serde(flatten)]
    result: EquilibriumResult,
    stability: StabilityRecord,
}

#[derive(Serialize)]
struct EquilibriaReport {
    schema_version: u32,
    model: String,
    mode: &'static str,
    value: f64,
    starts: usize,
    seed: u64,
    equilibria: Vec<EquilibriumEntry>,
}

fn equilibria(a: EquilibriaArgs) -> CliResult<i32> {
    let m = load_model(&a.model)?;
    let d = SampleDomain { seed: a.seed, ..SampleDomain::default_for(m.dim()) };
    let dynamics = match (a.beta, a.gamma, a.u) {
        (Some(b), _, _) => Dynamics::ConstantInput(b),
        (_, Some(g), _) => Dynamics::ClosedLoop(g),
        (_, _, Some(u)) => Dynamics::OpenLoop(u),
        _ => unreachable!("clap enforces one mode"),
    };
    let (mode, value, positive) = match dynamics {
        Dynamics::ConstantInput(v) => ("constant_input", v, true),
        Dynamics::ClosedLoop(v) => ("closed_loop", v, true),
        Dynamics::OpenLoop(v) => ("open_loop", v, false),
    };
    if !value.is_finite() || value < 0.0 || (positive && value == 0.0) {
        return Err(usage(format!("{mode} parameter must be {}, got {value}", if positive { "positive" } else { "nonnegative" })));
    }
    let roots = match dynamics {
        Dynamics::OpenLoop(u) => enumerate_open_loop_equilibria(&m, u, &d, a.starts),
        // the closed-loop roots are the constant-input roots at β = γ
        _ => constant_input_roots(&m, value, &d, a.starts),
    };
    if roots.is_empty() {
        return Err(numerical("no equilibrium found from any start"));
    }
    let mut entries = Vec::with_capacity(roots.len());
    for r in roots {
        let stability = classify_dynamics(&m, dynamics, &r.x_star).map_err(numerical)?;
        println!("{:?}  residual {:e}  {:?}", r.x_star, r.residual, stability.verdict);
        entries.push(EquilibriumEntry { result: r, stability });
    }
    let rep = EquilibriaReport {
        schema_version: posfeed::verify::SCHEMA_VERSION,
        model: m.name().into(),
        mode,
        value,
        starts: a.starts,
        seed: a.seed,
        equilibria: entries,
    };
    write_json(&rep, &a.out)?;
    Ok(EXIT_OK)
}

fn parse_switch(s: &str) -> CliResult<Scenario> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
    match nums {
        Ok(v) if v.len() == 3 => Ok(Scenario::Switched { u: v[0], gamma: v[1], t_switch: v[2] }),
        _ => Err(usage(format!("--switch must look like u:gamma:t, got `{s}`"))),
    }
}

fn simulate(a: SimulateArgs) -> CliResult<i32> {
    let m = load_model(&a.model)?;
    let sc = match (a.u, a.gamma, &a.switch) {
        (Some(u), _, _) => Scenario::OpenLoop { u },
        (_, Some(gamma), _) => Scenario::ClosedLoop { gamma },
        (_, _, Some(s)) => parse_switch(s)?,
        _ => unreachable!("clap enforces one scenario"),
    };
    sc.validate().map_err(usage)?;
    let x0 = parse_vector(&a.x0, m.dim())?;
    let (t0, t1) = parse_pair(&a.t, "--t")?;
    if !(t1 > t0) {
        return Err(usage(format!("--t needs t0 < t1, got {t0}:{t1}")));
    }
    let mut cfg = match a.rk4 {
        Some(h) => IntegratorConfig::rk4(h),
        None => IntegratorConfig::for_model(&m),
    };
    if let Some(r) = a.rtol {
        cfg = cfg.with_rtol(r);
    }
    if let Some(d) = a.dt_out {
        cfg = cfg.with_dt_out(d);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let tr = integrate(&m, sc, &x0, t0, t1, &cfg).map_err(numerical)?;
    write_trajectory_csv(&tr, &a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
    println!("{} samples, {} steps ({} rejected)", tr.len(), tr.stats.steps, tr.stats.rejected);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct LyapunovReport {
    lyapunov_exponent: f64,
    x0: Vec<f64>,
    transient: f64,
    measure: f64,
    renorm_dt: f64,
    integrator: IntegratorConfig,
}

fn lyapunov(a: LyapunovArgs) -> CliResult<i32> {
    let m = load_model(&a.model)?;
    let sc = match (a.u, a.gamma) {
        (Some(u), _) => Scenario::OpenLoop { u },
        (_, Some(gamma)) => Scenario::ClosedLoop { gamma },
        _ => unreachable!("clap enforces one scenario"),
    };
    sc.validate().map_err(usage)?;
    let x0 = parse_vector(&a.x0, m.dim())?;
    if !(a.transient >= 0.0 && a.measure > 0.0 && a.renorm > 0.0) {
        return Err(usage("need --transient >= 0, --measure > 0, --renorm > 0"));
    }
    let cfg = IntegratorConfig::for_model(&m);
    let lle = largest_lyapunov_exponent(&m, sc, &x0, a.transient, a.measure, a.renorm, &cfg).map_err(numerical)?;
    let payload = LyapunovReport { lyapunov_exponent: lle, x0, transient: a.transient, measure: a.measure, renorm_dt: a.renorm, integrator: cfg };
    write_json(&RunArtifact::report(Metadata::new(m.name()).with_scenario(sc), payload), &a.out)?;
    println!("largest Lyapunov exponent {lle}");
    Ok(EXIT_OK)
}
