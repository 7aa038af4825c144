//! Versioned JSON documents.

use std::fs;
use std::path::Path;

use ecoplan_core::sim::Scenario;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| CliError::input(format!("invalid JSON: {e}")))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, x: &T) -> Result<()> {
    write_text(path, &to_json(x))
}

/// Typed decode that reports the dotted path of the offending field.
pub fn decode<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let field = e.path().to_string();
        let msg = e.into_inner().to_string();
        if field == "." { CliError::input(msg) } else { CliError::field(field, msg) }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    decode(parse_json(&read_text(path)?)?)
}

fn check_version(obj: &mut serde_json::Map<String, Value>) -> Result<()> {
    match obj.remove("schema_version") {
        None => Err(CliError::field("schema_version", "missing field")),
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION as u64) => Ok(()),
        Some(other) => Err(CliError::field("schema_version", format!("unsupported version {other}, expected {SCHEMA_VERSION}"))),
    }
}

/// Scenario without the version tag, every defaulted field filled in.
pub fn scenario_value(sc: &Scenario) -> Value {
    serde_json::to_value(sc).expect("scenario serializes")
}

/// Scenario document: the scenario fields plus `schema_version`.
pub fn scenario_document(sc: &Scenario) -> Value {
    let mut v = scenario_value(sc);
    v.as_object_mut().expect("scenario is an object").insert("schema_version".into(), SCHEMA_VERSION.into());
    v
}

/// Strips and checks the version tag, leaving the bare scenario fields.
pub fn scenario_fields(mut doc: Value) -> Result<Value> {
    let obj = doc.as_object_mut().ok_or_else(|| CliError::input("scenario must be a JSON object"))?;
    check_version(obj)?;
    Ok(doc)
}

/// Decodes and validates bare scenario fields.
pub fn scenario_from_fields(fields: Value) -> Result<Scenario> {
    let sc: Scenario = decode(fields)?;
    sc.validate().map_err(|e| CliError::input(format!("invalid scenario: {e}")))?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_fields(scenario_fields(parse_json(&read_text(path)?)?)?)
}

pub fn save_scenario(path: &Path, sc: &Scenario) -> Result<()> {
    write_json(path, &scenario_document(sc))
}
