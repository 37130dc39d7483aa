use std::fs;
use std::path::Path;

use posfeed::io::{write_trajectory_csv, Metadata, RunArtifact};
use posfeed::sim::{integrate, IntegratorConfig, IntegratorStats};
use posfeed::{Scenario, SystemModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::{numerical, usage, CliResult, EXIT_OK};

/// Canned run behind one figure.
pub struct FigureSpec {
    pub model: &'static str,
    pub scenario: Scenario,
    pub t_end: f64,
    pub dt_out: f64,
    /// Either one initial state or a square grid of them.
    pub ics: Ics,
}

pub enum Ics {
    Single(&'static [f64]),
    Grid { per_axis: usize, lo: f64, hi: f64 },
}

pub fn figure(n: u8) -> Option<FigureSpec> {
    let f = match n {
        1 => FigureSpec {
            model: "S1",
            scenario: Scenario::OpenLoop { u: 0.25 },
            t_end: 400.0,
            dt_out: 0.5,
            ics: Ics::Grid { per_axis: 12, lo: 0.05, hi: 6.0 },
        },
        2 => FigureSpec { model: "S2", scenario: Scenario::OpenLoop { u: 1.0 }, t_end: 300.0, dt_out: 0.05, ics: Ics::Single(&[0.5; 3]) },
        3 => FigureSpec {
            model: "S2",
            scenario: Scenario::Switched { u: 1.0, gamma: 2.0, t_switch: 40.0 },
            t_end: 120.0,
            dt_out: 0.05,
            ics: Ics::Single(&[0.5; 3]),
        },
        4 => FigureSpec { model: "S3", scenario: Scenario::OpenLoop { u: 1.0 }, t_end: 300.0, dt_out: 0.05, ics: Ics::Single(&[1.0; 3]) },
        5 => FigureSpec {
            model: "S3",
            scenario: Scenario::Switched { u: 1.0, gamma: 1.73, t_switch: 20.0 },
            t_end: 200.0,
            dt_out: 0.05,
            ics: Ics::Single(&[1.0; 3]),
        },
        _ => return None,
    };
    Some(f)
}

impl FigureSpec {
    fn initial_states(&self) -> Vec<Vec<f64>> {
        match self.ics {
            Ics::Single(x) => vec![x.to_vec()],
            Ics::Grid { per_axis, lo, hi } => {
                let step = (hi - lo) / (per_axis - 1) as f64;
                let axis: Vec<f64> = (0..per_axis).map(|k| lo + step * k as f64).collect();
                axis.iter().flat_map(|a| axis.iter().map(move |b| vec![*a, *b])).collect()
            }
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    file: String,
    x0: Vec<f64>,
    final_state: Vec<f64>,
    stats: IntegratorStats,
}

#[derive(Serialize)]
struct FigureManifest {
    figure: u8,
    t0: f64,
    t1: f64,
    integrator: IntegratorConfig,
    runs: Vec<RunSummary>,
}

pub fn run(n: u8, outdir: &Path) -> CliResult<i32> {
    let fig = figure(n).ok_or_else(|| usage(format!("no figure {n}")))?;
    fs::create_dir_all(outdir).map_err(|e| usage(format!("{}: {e}", outdir.display())))?;
    let m = SystemModel::builtin(fig.model).map_err(numerical)?;
    let cfg = IntegratorConfig::for_model(&m).with_dt_out(fig.dt_out);
    let ics = fig.initial_states();
    let single = ics.len() == 1;

    let trajectories = ics
        .par_iter()
        .map(|x0| integrate(&m, fig.scenario, x0, 0.0, fig.t_end, &cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;

    let mut runs = Vec::with_capacity(ics.len());
    for (k, (x0, tr)) in ics.iter().zip(&trajectories).enumerate() {
        let file = if single { format!("fig{n}.csv") } else { format!("fig{n}_ic{k:03}.csv") };
        let path = outdir.join(&file);
        write_trajectory_csv(tr, &path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        runs.push(RunSummary { file, x0: x0.clone(), final_state: tr.final_state().to_vec(), stats: tr.stats });
    }
    let manifest = FigureManifest { figure: n, t0: 0.0, t1: fig.t_end, integrator: cfg, runs };
    let artifact = RunArtifact::report(Metadata::new(fig.model).with_scenario(fig.scenario), manifest);
    let path = outdir.join(format!("fig{n}.json"));
    posfeed::io::write_report_json(&artifact, &path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    println!("figure {n}: {} trajectories written to {}", ics.len(), outdir.display());
    Ok(EXIT_OK)
}
