//! `key=value` overrides applied to scenario fields.
//!
//! Keys are dotted paths into the scenario document (`vehicle.pm_w`,
//! `obstacles.0.speed_ms`). A key without dots that is not a top-level field
//! names the unique leaf whose name is the key or the key plus a unit suffix,
//! so `regen_decel_max` finds `vehicle.regen_decel_max_ms2`.

use serde_json::Value;

use crate::error::{CliError, Result};

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::input(format!("override `{s}` is not key=value"))),
    }
}

fn leaves(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, x) in m {
            let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if x.is_object() {
                leaves(x, &p, out);
            } else {
                out.push(p);
            }
        }
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |x, part| match x {
        Value::Object(m) => m.get(part),
        Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}

fn lookup_mut<'a>(v: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(v, |x, part| match x {
        Value::Object(m) => m.get_mut(part),
        Value::Array(a) => part.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
        _ => None,
    })
}

/// Full dotted path for `key` in `doc`.
pub fn resolve(doc: &Value, key: &str) -> Result<String> {
    if lookup(doc, key).is_some() {
        return Ok(key.to_string());
    }
    if !key.contains('.') {
        let mut all = Vec::new();
        leaves(doc, "", &mut all);
        let hits: Vec<String> = all
            .into_iter()
            .filter(|p| {
                let leaf = p.rsplit('.').next().unwrap_or(p);
                leaf == key || leaf.strip_prefix(key).is_some_and(|rest| rest.starts_with('_') && !rest[1..].contains('_'))
            })
            .collect();
        match hits.len() {
            1 => return Ok(hits.into_iter().next().unwrap()),
            0 => {}
            _ => return Err(CliError::field(key, format!("ambiguous key, candidates: {}", hits.join(", ")))),
        }
    }
    Err(CliError::field(key, "unknown scenario field"))
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Parses `raw` as a replacement for `old`, keeping its JSON type.
fn typed(path: &str, old: &Value, raw: &str) -> Result<Value> {
    let bad = |want: &str| CliError::field(path, format!("expected {want}, got `{raw}`"));
    match old {
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Bool(_) => raw.parse::<bool>().map(Value::Bool).map_err(|_| bad("boolean")),
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().map(Value::from).map_err(|_| bad("unsigned integer")),
        Value::Number(_) => {
            let x = raw.parse::<f64>().map_err(|_| bad("number"))?;
            serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| bad("finite number"))
        }
        // Optional fields currently unset, and whole arrays or objects.
        Value::Null => serde_json::from_str(raw).map_err(|_| bad("JSON value")),
        _ => {
            let v: Value = serde_json::from_str(raw).map_err(|_| bad(kind(old)))?;
            if kind(&v) == kind(old) { Ok(v) } else { Err(bad(kind(old))) }
        }
    }
}

/// Applies overrides in order; each key must already exist in `doc`.
pub fn apply(doc: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let path = resolve(doc, key)?;
        let slot = lookup_mut(doc, &path).expect("resolved path exists");
        *slot = typed(&path, slot, raw)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc() -> Value {
        json!({"name": "x", "rng_seed": 7, "vehicle": {"regen_decel_max_ms2": 3.0, "pm_w": 25000.0},
               "planner": {"path_weights": {"d2": 0.3}, "speed_weights": {"d2": 3.0}, "jitter_lattice": false},
               "finish_position_m": null, "obstacles": [{"speed_ms": 1.0}]})
    }

    #[test]
    fn dotted_and_short_keys() {
        let mut d = doc();
        apply(&mut d, &[("regen_decel_max".into(), "2.5".into()), ("vehicle.pm_w".into(), "1e4".into())]).unwrap();
        assert_eq!(d["vehicle"]["regen_decel_max_ms2"], json!(2.5));
        assert_eq!(d["vehicle"]["pm_w"], json!(10000.0));
        apply(&mut d, &[("obstacles.0.speed_ms".into(), "4".into()), ("finish_position_m".into(), "9.5".into())]).unwrap();
        assert_eq!(d["obstacles"][0]["speed_ms"], json!(4.0));
        assert_eq!(d["finish_position_m"], json!(9.5));
    }

    #[test]
    fn type_checked() {
        let mut d = doc();
        assert!(apply(&mut d, &[("rng_seed".into(), "-1".into())]).is_err());
        assert!(apply(&mut d, &[("jitter_lattice".into(), "yes".into())]).is_err());
        assert!(apply(&mut d, &[("vehicle.pm_w".into(), "fast".into())]).is_err());
        apply(&mut d, &[("jitter_lattice".into(), "true".into())]).unwrap();
        assert_eq!(d["planner"]["jitter_lattice"], json!(true));
    }

    #[test]
    fn unknown_and_ambiguous() {
        let d = doc();
        let e = resolve(&d, "vehicle.nope").unwrap_err();
        assert!(e.to_string().contains("vehicle.nope"));
        assert!(resolve(&d, "d2").unwrap_err().to_string().contains("ambiguous"));
        assert_eq!(resolve(&d, "pm").unwrap(), "vehicle.pm_w");
    }

    #[test]
    fn assignment_syntax() {
        assert_eq!(parse_assignment("a.b = 2").unwrap(), ("a.b".into(), "2".into()));
        assert!(parse_assignment("nokey").is_err());
        assert!(parse_assignment("=3").is_err());
    }
}
