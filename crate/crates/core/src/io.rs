//! Trajectory CSV and JSON report serialization.
//!
//! CSV layout: header `t,x1,...,xn,u`, one row per output time, numbers in
//! shortest round-trip form (Rust's `{:?}` for `f64`), LF line endings.
//! JSON: pretty-printed, keys in declaration order, trailing newline.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::IoError;
use crate::model::Scenario;
use crate::sim::Trajectory;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.push("u".into());
    h
}

pub fn write_trajectory<W: Write>(tr: &Trajectory, out: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(trajectory_header(tr.dim()))?;
    let mut row = Vec::with_capacity(tr.dim() + 2);
    for ((t, x), u) in tr.times.iter().zip(&tr.states).zip(&tr.inputs) {
        row.clear();
        row.push(format_f64(*t));
        row.extend(x.iter().map(|v| format_f64(*v)));
        row.push(format_f64(*u));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_csv_string(tr: &Trajectory) -> String {
    let mut buf = Vec::new();
    write_trajectory(tr, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is ASCII")
}

pub fn write_trajectory_csv(tr: &Trajectory, path: impl AsRef<Path>) -> Result<(), IoError> {
    let f = BufWriter::new(File::create(path)?);
    write_trajectory(tr, f)
}

/// Columns read back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
}

pub fn read_trajectory<R: Read>(input: R) -> Result<TrajectoryTable, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 3 || &header[0] != "t" || &header[cols - 1] != "u" {
        return Err(IoError::Format { row: 0, message: "expected header t,x1,...,xn,u".into() });
    }
    for (i, h) in header.iter().enumerate().take(cols - 1).skip(1) {
        if h != format!("x{i}") {
            return Err(IoError::Format { row: 0, message: format!("column {} should be x{i}, found `{h}`", i + 1) });
        }
    }
    let mut table = TrajectoryTable { times: Vec::new(), states: Vec::new(), inputs: Vec::new() };
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format { row: k + 1, message: e.to_string() })?;
        table.times.push(vals[0]);
        table.states.push(vals[1..cols - 1].to_vec());
        table.inputs.push(vals[cols - 1]);
    }
    Ok(table)
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<TrajectoryTable, IoError> {
    read_trajectory(File::open(path)?)
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Write any report (verification, equilibrium, artifact) as JSON.
pub fn write_report_json<T: Serialize + ?Sized>(r: &T, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(to_json_string(r)?.as_bytes())?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Trajectory,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Off by default so that artifacts stay byte-identical across runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl Metadata {
    pub fn new(model: impl Into<String>) -> Self {
        Metadata { model: model.into(), scenario: None, seed: None, tool_version: TOOL_VERSION.into(), wall_clock_seconds: None }
    }

    pub fn with_scenario(mut self, sc: Scenario) -> Self {
        self.scenario = Some(sc);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// A report or trajectory wrapped with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunArtifact<P> {
    pub schema_version: u32,
    pub kind: ArtifactKind,
    pub metadata: Metadata,
    pub payload: P,
}

impl<P: Serialize> RunArtifact<P> {
    pub fn report(metadata: Metadata, payload: P) -> Self {
        RunArtifact { schema_version: crate::verify::SCHEMA_VERSION, kind: ArtifactKind::Report, metadata, payload }
    }

    pub fn trajectory(metadata: Metadata, payload: P) -> Self {
        RunArtifact { schema_version: crate::verify::SCHEMA_VERSION, kind: ArtifactKind::Trajectory, metadata, payload }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{IntegratorStats, RunField};

    fn constant_1d() -> Trajectory {
        Trajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![vec![2.0]; 3],
            inputs: vec![1.0; 3],
            field: RunField::ConstantInput { beta: 1.0 },
            stats: IntegratorStats::default(),
        }
    }

    #[test]
    fn header_plus_rows() {
        let s = trajectory_csv_string(&constant_1d());
        assert_eq!(s, "t,x1,u\n0.0,2.0,1.0\n0.5,2.0,1.0\n1.0,2.0,1.0\n");
    }

    #[test]
    fn awkward_numbers_round_trip() {
        let mut tr = constant_1d();
        tr.states = vec![vec![0.1 + 0.2], vec![1e-300], vec![123456789.123456789]];
        tr.inputs = vec![-0.0, f64::MIN_POSITIVE, 1.0 / 3.0];
        let back = read_trajectory(trajectory_csv_string(&tr).as_bytes()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
        assert_eq!(back.inputs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), tr.inputs.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn bad_header() {
        assert!(read_trajectory("t,y1,u\n0,1,1\n".as_bytes()).is_err());
        assert!(read_trajectory("t,x1,u\n0,abc,1\n".as_bytes()).is_err());
    }

    #[test]
    fn artifact_json_shape() {
        let a = RunArtifact::report(Metadata::new("S1").with_seed(42), vec![1.0, 4.0]);
        let s = to_json_string(&a).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["kind"], "report");
        assert_eq!(v["metadata"]["seed"], 42);
        assert!(v["metadata"].get("wall_clock_seconds").is_none());
        assert!(s.ends_with("}\n"));
    }
}
