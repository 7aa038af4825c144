//! Plot-ready CSV tables: header row, comma separator, LF line endings.

use std::path::Path;

use ecoplan_core::energy::{AccelHistogram, EnergyReport, PowerSample, BIN_EDGES};
use ecoplan_core::frenet::{self, Cartesian, FrenetPoint, ReferenceLine};
use ecoplan_core::sim::{SimTrace, TraceTick};
use ecoplan_core::speed::PhaseLabel;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Reference line of one planner cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RefRow {
    pub cycle: usize,
    pub t_plan: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

/// Planned path of one cycle, Frenet and Cartesian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathRow {
    pub cycle: usize,
    pub t_plan: f64,
    pub s: f64,
    pub l: f64,
    pub dl: f64,
    pub ddl: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SpeedRow {
    pub cycle: usize,
    pub t_plan: f64,
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub jerk: f64,
    pub phase: PhaseLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decel,
    Accel,
}

/// Time fraction per acceleration-magnitude bin; `upper` is empty for the
/// open last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HistogramRow {
    pub direction: Direction,
    pub lower_ms2: f64,
    pub upper_ms2: Option<f64>,
    pub fraction: f64,
}

/// One value of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub baseline_regen_j: Option<f64>,
    pub ehmpp_regen_j: Option<f64>,
    pub regen_ratio: Option<f64>,
    pub low_decel_delta_points: Option<f64>,
    pub baseline_power_error_w: Option<f64>,
    pub ehmpp_power_error_w: Option<f64>,
    pub baseline_min_lateral_clearance_m: Option<f64>,
    pub ehmpp_min_lateral_clearance_m: Option<f64>,
    pub baseline_violations: Option<usize>,
    pub ehmpp_violations: Option<usize>,
    pub flagged: bool,
    pub error: Option<String>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    r.deserialize().enumerate().map(|(i, row)| row.map_err(|e| CliError::field(format!("{}:{}", path.display(), i + 2), e.to_string()))).collect()
}

pub fn trace_rows(trace: &SimTrace) -> Vec<TraceTick> {
    trace.ticks.clone()
}

pub fn power_rows(trace: &SimTrace) -> Vec<PowerSample> {
    trace.power_samples()
}

pub fn histogram_rows(report: &EnergyReport) -> Vec<HistogramRow> {
    let h: &AccelHistogram = &report.accel_histogram;
    let row = |direction, i: usize, fraction| HistogramRow { direction, lower_ms2: BIN_EDGES[i], upper_ms2: BIN_EDGES.get(i + 1).copied(), fraction };
    let dec = h.decel.iter().enumerate().map(|(i, &f)| row(Direction::Decel, i, f));
    let acc = h.accel.iter().enumerate().map(|(i, &f)| row(Direction::Accel, i, f));
    dec.chain(acc).collect()
}

pub fn refline_rows(trace: &SimTrace) -> Vec<RefRow> {
    let mut out = Vec::new();
    for (cycle, p) in trace.plans.iter().enumerate() {
        out.extend(p.refline.iter().map(|r| RefRow { cycle, t_plan: p.t, s: r.s, x: r.x, y: r.y, heading: r.heading, curvature: r.curvature }));
    }
    out
}

/// Path rows; the Cartesian columns come from the cycle's reference line.
pub fn path_rows(trace: &SimTrace) -> Result<Vec<PathRow>> {
    let mut out = Vec::new();
    for (cycle, p) in trace.plans.iter().enumerate() {
        let pts: Vec<Cartesian> = p.refline.iter().map(|r| Cartesian::new(r.x, r.y)).collect();
        let line = ReferenceLine::from_points(&pts).map_err(|e| CliError::Planner(format!("cycle {cycle} reference line: {e}")))?;
        for q in &p.path {
            let xy = frenet::to_cartesian(FrenetPoint::new(q[0], q[1]), &line).map_err(|e| CliError::Planner(format!("cycle {cycle} path: {e}")))?;
            out.push(PathRow { cycle, t_plan: p.t, s: q[0], l: q[1], dl: q[2], ddl: q[3], x: xy.x, y: xy.y });
        }
    }
    Ok(out)
}

pub fn speed_rows(trace: &SimTrace) -> Vec<SpeedRow> {
    let mut out = Vec::new();
    for (cycle, p) in trace.plans.iter().enumerate() {
        out.extend(p.speed.iter().map(|q| SpeedRow { cycle, t_plan: p.t, t: q.t, s: q.s, v: q.v, a: q.a, jerk: q.jerk, phase: q.phase }));
    }
    out
}
