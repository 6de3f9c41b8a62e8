//! Step log, run summary and centerline dump.
//!
//! The step log is comma-separated text with a fixed header. Row `k = 0` holds
//! the initial observation before any command; rows `1..=steps_taken` follow.
//! Floats are written with 17 significant digits so they read back exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::world::{Centerline, EffectorPose, VelocityCommand};

const FIXED_LEADING: [&str; 7] = ["k", "pose_x", "pose_y", "pose_theta", "u_x", "u_y", "u_theta"];
const FIXED_TRAILING: [&str; 7] = ["t1", "alpha", "delta_eps", "trace_p", "q_value", "clamped", "skipped"];

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Pose after the command of this step.
    pub pose: EffectorPose,
    /// Saturated controller output.
    pub u: VelocityCommand,
    /// Feature observed at `pose`.
    pub s: DVector<f64>,
    pub t1: f64,
    pub alpha: f64,
    pub delta_eps: f64,
    pub trace_p: f64,
    /// Cost at the saturated command.
    pub q_value: f64,
    /// Saturation or the workspace boundary changed the command.
    pub clamped: bool,
    /// The filter update was skipped for a negligible move.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps_taken: usize,
    pub initial_t1: f64,
    pub final_t1: f64,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    pub config: RunConfig,
}

pub fn log_header(p: usize) -> String {
    let features = (1..=p).map(|i| format!("s_{i}"));
    FIXED_LEADING
        .iter()
        .map(|s| s.to_string())
        .chain(features)
        .chain(FIXED_TRAILING.iter().map(|s| s.to_string()))
        .collect::<Vec<_>>()
        .join(",")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn format_step_log(records: &[StepRecord]) -> String {
    let p = records.first().map_or(0, |r| r.s.len());
    let mut out = log_header(p);
    out.push('\n');
    for r in records {
        write!(out, "{}", r.k).unwrap();
        let floats = [r.pose.x, r.pose.y, r.pose.theta, r.u.x, r.u.y, r.u.z]
            .into_iter()
            .chain(r.s.iter().copied())
            .chain([r.t1, r.alpha, r.delta_eps, r.trace_p, r.q_value]);
        for v in floats {
            write!(out, ",{v:.16e}").unwrap();
        }
        writeln!(out, ",{},{}", flag(r.clamped), flag(r.skipped)).unwrap();
    }
    out
}

pub fn write_step_log(records: &[StepRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_step_log(records)).map_err(|e| Error::io(path, e))
}

pub fn read_step_log(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_step_log(&text).map_err(|reason| Error::malformed(path, reason))
}

fn parse_step_log(text: &str) -> std::result::Result<Vec<StepRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let columns: Vec<&str> = header.split(',').collect();
    let fixed = FIXED_LEADING.len() + FIXED_TRAILING.len();
    if columns.len() < fixed {
        return Err(format!("header has {} columns, expected at least {fixed}", columns.len()));
    }
    let p = columns.len() - fixed;
    if header != log_header(p) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(format!("line {line_no}: {} fields, expected {}", fields.len(), columns.len()));
        }
        let float = |j: usize| -> std::result::Result<f64, String> {
            fields[j]
                .parse()
                .map_err(|_| format!("line {line_no}: bad value {:?} in column {}", fields[j], columns[j]))
        };
        let boolean = |j: usize| match fields[j] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(format!("line {line_no}: bad flag {other:?} in column {}", columns[j])),
        };
        let k = fields[0]
            .parse()
            .map_err(|_| format!("line {line_no}: bad step index {:?}", fields[0]))?;
        let t = 7 + p;
        records.push(StepRecord {
            k,
            pose: EffectorPose {
                x: float(1)?,
                y: float(2)?,
                theta: float(3)?,
            },
            u: Vector3::new(float(4)?, float(5)?, float(6)?),
            s: DVector::from_iterator(p, (7..t).map(float).collect::<std::result::Result<Vec<_>, _>>()?),
            t1: float(t)?,
            alpha: float(t + 1)?,
            delta_eps: float(t + 2)?,
            trace_p: float(t + 3)?,
            q_value: float(t + 4)?,
            clamped: boolean(t + 5)?,
            skipped: boolean(t + 6)?,
        });
    }
    Ok(records)
}

/// Summary path next to a step log: `run.csv` becomes `run.summary.txt`.
pub fn summary_path(log_path: &Path) -> PathBuf {
    log_path.with_extension("summary.txt")
}

/// Centerline dump path next to a step log: `run.csv` becomes `run.shapes.csv`.
pub fn shapes_path(log_path: &Path) -> PathBuf {
    log_path.with_extension("shapes.csv")
}

pub fn format_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    writeln!(out, "steps_taken = {}", summary.steps_taken).unwrap();
    writeln!(out, "initial_t1 = {:.16e}", summary.initial_t1).unwrap();
    writeln!(out, "final_t1 = {:.16e}", summary.final_t1).unwrap();
    writeln!(out, "converged = {}", summary.converged).unwrap();
    writeln!(out, "wall_time = {:.6}", summary.wall_time).unwrap();
    for line in summary.config.to_flat_string().lines() {
        writeln!(out, "config.{line}").unwrap();
    }
    out
}

pub fn write_summary(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_summary(summary)).map_err(|e| Error::io(path, e))
}

/// Reads a summary file as raw `key = value` pairs.
pub fn read_summary(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::malformed(path, format!("line {}: expected `key = value`", i + 1)))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

/// One labeled centerline of the dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRow {
    /// `target` or `step`.
    pub label: String,
    pub k: usize,
    pub centerline: Centerline,
}

/// Writes `label,k,u_1,v_1,...,u_N,v_N` rows.
pub fn write_shapes(rows: &[ShapeRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = rows.first().map_or(0, |r| r.centerline.len());
    let mut out = String::from("label,k");
    for i in 1..=n {
        write!(out, ",u_{i},v_{i}").unwrap();
    }
    out.push('\n');
    for row in rows {
        write!(out, "{},{}", row.label, row.k).unwrap();
        for p in row.centerline.points() {
            write!(out, ",{:.16e},{:.16e}", p.x, p.y).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_shapes(path: impl AsRef<Path>) -> Result<Vec<ShapeRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::malformed(path, "empty file"))?;
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = |what: &str| Error::malformed(path, format!("line {}: {what}", i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width || width < 6 {
            return Err(bad("wrong number of fields"));
        }
        let k = fields[1].parse().map_err(|_| bad("bad step index"))?;
        let values = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad coordinate"))?;
        let centerline = Centerline::from_vector(&DVector::from_vec(values))?;
        rows.push(ShapeRow {
            label: fields[0].to_string(),
            k,
            centerline,
        });
    }
    Ok(rows)
}
