//! `run`, `compare` and `sweep`.

use std::fs;
use std::path::{Path, PathBuf};

use ecoplan_core::energy;
use ecoplan_core::sim::{self, PlannerKind, Scenario, SimRun};
use log::info;

use crate::error::{CliError, Result};
use crate::files::{self, write_json};
use crate::overrides;
use crate::reports::{self, ComparisonDocument, RunFailure, RunReport};
use crate::tables::{self, write_csv, SweepRow};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub planner: PlannerKind,
    pub out: PathBuf,
    /// `(dotted key, raw value)` in application order.
    pub overrides: Vec<(String, String)>,
    pub seed: Option<u64>,
}

/// Files written into every run directory.
pub const RUN_FILES: [&str; 7] = ["trace.csv", "report.json", "refline.csv", "path.csv", "speed.csv", "histogram.csv", "power.csv"];

fn scenario_doc(cfg: &RunConfig) -> Result<serde_json::Value> {
    let fields = files::scenario_fields(files::parse_json(&files::read_text(&cfg.scenario)?)?)?;
    // Round trip through the typed scenario so defaulted fields can be overridden.
    let sc = files::scenario_from_fields(fields)?;
    Ok(files::scenario_value(&sc))
}

fn finish(mut doc: serde_json::Value, overrides: &[(String, String)], seed: Option<u64>) -> Result<Scenario> {
    overrides::apply(&mut doc, overrides)?;
    if let Some(seed) = seed {
        doc["rng_seed"] = seed.into();
    }
    files::scenario_from_fields(doc)
}

/// Loads the scenario and applies overrides and the seed.
pub fn prepare(cfg: &RunConfig) -> Result<Scenario> {
    finish(scenario_doc(cfg)?, &cfg.overrides, cfg.seed)
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").and_then(|_| fs::remove_file(&probe)).map_err(|e| CliError::io(dir, e))
}

/// Writes one run directory and returns its report.
pub fn write_run(dir: &Path, sc: &Scenario, run: &SimRun) -> Result<RunReport> {
    make_dir(dir)?;
    let report = reports::run_report(sc, run);
    write_csv(&dir.join("trace.csv"), &tables::trace_rows(&run.trace))?;
    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("refline.csv"), &tables::refline_rows(&run.trace))?;
    write_csv(&dir.join("path.csv"), &tables::path_rows(&run.trace)?)?;
    write_csv(&dir.join("speed.csv"), &tables::speed_rows(&run.trace))?;
    write_csv(&dir.join("histogram.csv"), &tables::histogram_rows(&run.report))?;
    write_csv(&dir.join("power.csv"), &tables::power_rows(&run.trace))?;
    Ok(report)
}

fn planner_name(k: PlannerKind) -> &'static str {
    match k {
        PlannerKind::Ehmpp => "ehmpp",
        PlannerKind::Baseline => "baseline",
    }
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    let sc = prepare(cfg)?;
    make_dir(&cfg.out)?;
    info!("running {} with {}", sc.name, planner_name(cfg.planner));
    let run = sim::run_closed_loop(&sc, cfg.planner).map_err(|e| CliError::Planner(e.to_string()))?;
    let report = write_run(&cfg.out, &sc, &run)?;
    if report.flagged {
        return Err(CliError::Planner(format!("{} run flagged after {} emergency stop(s)", planner_name(cfg.planner), report.emergency_stops)));
    }
    Ok(report)
}

/// Both planners on one scenario; writes `baseline/`, `ehmpp/` and
/// `comparison.json` under `out`.
pub fn compare_into(sc: &Scenario, out: &Path) -> Result<ComparisonDocument> {
    make_dir(out)?;
    let (base, eco) = rayon::join(|| sim::run_closed_loop(sc, PlannerKind::Baseline), || sim::run_closed_loop(sc, PlannerKind::Ehmpp));
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for (kind, r) in [(PlannerKind::Baseline, base), (PlannerKind::Ehmpp, eco)] {
        match r {
            Ok(run) => {
                let rep = write_run(&out.join(planner_name(kind)), sc, &run)?;
                reports.push(Some((rep, run.report)));
            }
            Err(e) => {
                failures.push(RunFailure { planner: kind, message: e.to_string() });
                reports.push(None);
            }
        }
    }
    let (comparison, headline, flagged) = match (&reports[0], &reports[1]) {
        (Some((b, be)), Some((e, ee))) => {
            let cmp = energy::compare_reports(be, ee).map_err(|err| CliError::Planner(err.to_string()))?;
            let h = reports::headline(b, e, &cmp);
            (Some(cmp), Some(h), b.flagged || e.flagged)
        }
        _ => (None, None, true),
    };
    let doc = ComparisonDocument {
        schema_version: files::SCHEMA_VERSION,
        scenario: sc.name.clone(),
        scenario_hash: sc.identity_hash(),
        flagged,
        headline,
        comparison,
        failures,
    };
    write_json(&out.join("comparison.json"), &doc)?;
    Ok(doc)
}

/// Planner failure when a run failed or was flagged.
pub fn check_compare(doc: &ComparisonDocument) -> Result<()> {
    if let Some(f) = doc.failures.first() {
        return Err(CliError::Planner(format!("{} run failed: {}", planner_name(f.planner), f.message)));
    }
    if doc.flagged {
        return Err(CliError::Planner("a run was flagged".into()));
    }
    Ok(())
}

/// Headline lines printed by `compare`.
pub fn headline_text(doc: &ComparisonDocument) -> String {
    match &doc.headline {
        None => "no comparison: a run failed\n".into(),
        Some(h) => {
            let power = h.mean_cruise_power_error_delta_w.map_or("n/a".into(), |d| format!("{d:+.3} W"));
            format!(
                "regen energy delta: {:+.3} J\n(0,0.5) decel bin delta: {:+.3} points\nmean |P - P_opt| delta: {power}\n",
                h.regen_energy_delta_j,
                h.low_decel_bin_delta_points
            )
        }
    }
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonDocument> {
    let sc = prepare(cfg)?;
    let doc = compare_into(&sc, &cfg.out)?;
    check_compare(&doc)?;
    Ok(doc)
}

fn dir_name(i: usize, key: &str, value: &str) -> String {
    let clean: String = format!("{key}={value}").chars().map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' }).collect();
    format!("{i:03}_{clean}")
}

fn sweep_row(param: &str, value: &str, sc: &Scenario, out: &Path) -> SweepRow {
    let mut row = SweepRow {
        param: param.into(),
        value: value.into(),
        baseline_regen_j: None,
        ehmpp_regen_j: None,
        regen_ratio: None,
        low_decel_delta_points: None,
        baseline_power_error_w: None,
        ehmpp_power_error_w: None,
        baseline_min_lateral_clearance_m: None,
        ehmpp_min_lateral_clearance_m: None,
        baseline_violations: None,
        ehmpp_violations: None,
        flagged: true,
        error: None,
    };
    let doc = match compare_into(sc, out) {
        Ok(d) => d,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.flagged = doc.flagged;
    row.error = doc.failures.first().map(|f| f.message.clone());
    let read = |k| files::read_json::<RunReport>(&out.join(planner_name(k)).join("report.json")).ok();
    if let Some(b) = read(PlannerKind::Baseline) {
        row.baseline_regen_j = Some(b.energy.regen_energy_j);
        row.baseline_power_error_w = b.mean_cruise_power_error_w;
        row.baseline_min_lateral_clearance_m = b.min_lateral_clearance_m;
        row.baseline_violations = Some(b.safety_violations);
    }
    if let Some(e) = read(PlannerKind::Ehmpp) {
        row.ehmpp_regen_j = Some(e.energy.regen_energy_j);
        row.ehmpp_power_error_w = e.mean_cruise_power_error_w;
        row.ehmpp_min_lateral_clearance_m = e.min_lateral_clearance_m;
        row.ehmpp_violations = Some(e.safety_violations);
    }
    if let Some(c) = &doc.comparison {
        row.low_decel_delta_points = Some(c.low_decel_bin.delta_points);
        row.regen_ratio = c.channels.iter().find(|d| d.name == "regen_energy_j").and_then(|d| d.ratio);
    }
    row
}

/// One comparison per value under `out`, plus `out/summary.csv`.
pub fn cmd_sweep(cfg: &RunConfig, param: &str, values: &[String], jobs: usize) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CliError::field("values", "empty value list"));
    }
    let doc = scenario_doc(cfg)?;
    let key = overrides::resolve(&doc, param)?;
    // Every value must type-check before anything runs.
    let scenarios = values
        .iter()
        .map(|v| {
            let mut ov = cfg.overrides.clone();
            ov.push((key.clone(), v.clone()));
            finish(doc.clone(), &ov, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    make_dir(&cfg.out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| CliError::input(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        scenarios
            .par_iter()
            .zip(values.par_iter())
            .enumerate()
            .map(|(i, (sc, v))| {
                info!("sweep {key}={v}");
                sweep_row(&key, v, sc, &cfg.out.join(dir_name(i, &key, v)))
            })
            .collect()
    });
    write_csv(&cfg.out.join("summary.csv"), &rows)?;
    if let Some(r) = rows.iter().find(|r| r.flagged || r.error.is_some()) {
        return Err(CliError::Planner(format!("sweep value {} failed or was flagged", r.value)));
    }
    Ok(rows)
}
