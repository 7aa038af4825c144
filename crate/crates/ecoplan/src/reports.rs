//! `report.json` and `comparison.json`.

use ecoplan_core::energy::{EnergyReport, ReportComparison};
use ecoplan_core::qp::QpStatus;
use ecoplan_core::sim::{self, EnergyAudit, PlannerKind, Scenario, SimRun, SimTrace};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::files::SCHEMA_VERSION;

/// Certification summary over every QP solved in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QpSummary {
    pub solves: usize,
    pub non_optimal: usize,
    pub max_kkt_residual: f64,
    /// Largest `(refined - coarse) / max(1, |coarse|)` over certified solves.
    pub max_objective_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub scenario_hash: String,
    pub planner: PlannerKind,
    pub flagged: bool,
    pub emergency_stops: usize,
    pub cycle_errors: Vec<String>,
    pub safety_violations: usize,
    pub min_lateral_clearance_m: Option<f64>,
    /// `[min, max]` regenerative deceleration of the vehicle.
    pub regen_envelope_ms2: [f64; 2],
    /// Largest regenerative deceleration supplied on any tick.
    pub max_regen_decel_ms2: f64,
    pub p_opt_w: f64,
    pub mean_cruise_power_error_w: Option<f64>,
    pub path_qp: QpSummary,
    pub speed_qp: QpSummary,
    pub audit: EnergyAudit,
    pub energy: EnergyReport,
}

/// Regenerative deceleration per tick, recovered from the regen power.
pub fn regen_decels(sc: &Scenario, trace: &SimTrace) -> Vec<f64> {
    let (m, eff) = (sc.vehicle.mass_kg, sc.planner.regen_efficiency);
    trace.ticks.iter().map(|k| if k.regen_w > 0.0 && k.v > 0.0 { k.regen_w / (eff * m * k.v) } else { 0.0 }).collect()
}

fn qp_summary(items: impl Iterator<Item = (Option<QpStatus>, f64, f64, f64)>) -> QpSummary {
    let mut s = QpSummary { solves: 0, non_optimal: 0, max_kkt_residual: 0.0, max_objective_excess: f64::NEG_INFINITY };
    for (status, kkt, refined, coarse) in items {
        let Some(status) = status else { continue };
        s.solves += 1;
        if status != QpStatus::Optimal {
            s.non_optimal += 1;
            continue;
        }
        s.max_kkt_residual = s.max_kkt_residual.max(kkt);
        if coarse.is_finite() {
            s.max_objective_excess = s.max_objective_excess.max((refined - coarse) / coarse.abs().max(1.0));
        }
    }
    if s.max_objective_excess == f64::NEG_INFINITY {
        s.max_objective_excess = 0.0;
    }
    s
}

pub fn run_report(sc: &Scenario, run: &SimRun) -> RunReport {
    let t = &run.trace;
    let audit = sim::energy_audit(sc, t).unwrap_or(EnergyAudit {
        traction_j: 0.0,
        kinetic_gain_j: 0.0,
        resistive_j: 0.0,
        brake_j: 0.0,
        regen_j: 0.0,
        imbalance_j: 0.0,
        relative: 0.0,
    });
    RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        scenario_hash: t.scenario_hash.clone(),
        planner: t.planner,
        flagged: t.flagged,
        emergency_stops: t.emergency_stops,
        cycle_errors: t.cycles.iter().filter_map(|c| c.error.as_ref().map(|e| format!("t={}: {e}", c.t))).collect(),
        safety_violations: sim::safety_violations(sc, t).len(),
        min_lateral_clearance_m: sim::min_lateral_clearance(sc, t),
        regen_envelope_ms2: [sc.vehicle.regen_decel_min_ms2, sc.vehicle.regen_decel_max_ms2],
        max_regen_decel_ms2: regen_decels(sc, t).into_iter().fold(0.0, f64::max),
        p_opt_w: sc.vehicle.p_opt_w,
        mean_cruise_power_error_w: t.mean_cruise_power_error(sc.vehicle.p_opt_w),
        path_qp: qp_summary(t.cycles.iter().map(|c| (c.path_qp_status, c.path_kkt_residual, c.path_objective, c.path_dp_objective))),
        speed_qp: qp_summary(t.cycles.iter().map(|c| (c.speed_qp_status, c.speed_kkt_residual, c.speed_objective, c.speed_coarse_objective))),
        audit,
        energy: run.report.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Headline {
    /// EHMPP minus baseline.
    pub regen_energy_delta_j: f64,
    pub low_decel_bin_delta_points: f64,
    pub mean_cruise_power_error_delta_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunFailure {
    pub planner: PlannerKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComparisonDocument {
    pub schema_version: u32,
    pub scenario: String,
    pub scenario_hash: String,
    pub flagged: bool,
    pub headline: Option<Headline>,
    pub comparison: Option<ReportComparison>,
    pub failures: Vec<RunFailure>,
}

pub fn headline(base: &RunReport, eco: &RunReport, cmp: &ReportComparison) -> Headline {
    Headline {
        regen_energy_delta_j: eco.energy.regen_energy_j - base.energy.regen_energy_j,
        low_decel_bin_delta_points: cmp.low_decel_bin.delta_points,
        mean_cruise_power_error_delta_w: eco.mean_cruise_power_error_w.zip(base.mean_cruise_power_error_w).map(|(e, b)| e - b),
    }
}
