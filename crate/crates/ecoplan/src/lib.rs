//! Scenario and report files, plot data and the `ecoplan` commands on top
//! of [`ecoplan_core`].

pub mod commands;
pub mod error;
pub mod files;
pub mod overrides;
pub mod reports;
pub mod schema;
pub mod tables;

pub use error::{CliError, Result};

use std::path::Path;

/// Writes the JSON schemas to `root/schemas` and the shipped fixtures to
/// `root/scenarios`.
pub fn write_assets(root: &Path) -> Result<()> {
    schema::write_all(&root.join("schemas"))?;
    let dir = root.join("scenarios");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    for sc in ecoplan_core::sim::fixtures::all() {
        files::save_scenario(&dir.join(format!("{}.json", sc.name)), &sc)?;
    }
    Ok(())
}
