//! JSON schemas of every emitted file. CSV schemas describe one row; the
//! header row lists exactly the schema's properties.

use std::fs;
use std::path::Path;

use ecoplan_core::energy::PowerSample;
use ecoplan_core::sim::{Scenario, TraceTick};
use schemars::{schema_for, JsonSchema};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::files::{to_json, SCHEMA_VERSION};
use crate::reports::{ComparisonDocument, RunReport};
use crate::tables::{HistogramRow, PathRow, RefRow, SpeedRow, SweepRow};

fn of<T: JsonSchema>() -> Value {
    serde_json::to_value(schema_for!(T)).expect("schema serializes")
}

pub fn scenario() -> Value {
    let mut s = of::<Scenario>();
    s["properties"]["schema_version"] = json!({ "type": "integer", "const": SCHEMA_VERSION });
    s["required"].as_array_mut().expect("scenario has required fields").push("schema_version".into());
    s
}

/// `(file name, schema)` for every emitted format.
pub fn all() -> Vec<(&'static str, Value)> {
    vec![
        ("scenario.schema.json", scenario()),
        ("report.schema.json", of::<RunReport>()),
        ("comparison.schema.json", of::<ComparisonDocument>()),
        ("trace.csv.schema.json", of::<TraceTick>()),
        ("refline.csv.schema.json", of::<RefRow>()),
        ("path.csv.schema.json", of::<PathRow>()),
        ("speed.csv.schema.json", of::<SpeedRow>()),
        ("histogram.csv.schema.json", of::<HistogramRow>()),
        ("power.csv.schema.json", of::<PowerSample>()),
        ("summary.csv.schema.json", of::<SweepRow>()),
    ]
}

/// Schema for an emitted file name, e.g. `trace.csv` or `report.json`.
pub fn for_file(name: &str) -> Option<Value> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let want = if name.ends_with(".csv") { format!("{name}.schema.json") } else { format!("{stem}.schema.json") };
    all().into_iter().find(|(n, _)| *n == want).map(|(_, s)| s)
}

/// Property names of a row schema.
pub fn columns(schema: &Value) -> Vec<String> {
    schema["properties"].as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default()
}

pub fn write_all(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, s) in all() {
        let p = dir.join(name);
        fs::write(&p, to_json(&s)).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}
