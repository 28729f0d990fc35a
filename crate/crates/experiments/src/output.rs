//! Writing a finished experiment to disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{ExperimentError, Result};
use crate::run::ExperimentOutcome;
use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub family: String,
    pub spec_hash: String,
    pub seeds: Vec<u64>,
    pub crate_version: String,
    pub files: Vec<String>,
    pub assertions_failed: Vec<String>,
    pub warnings: Vec<String>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}

/// Writes `results.csv`, one wide CSV per metric, `summary.csv`,
/// `checks.csv`, `spec.toml` and `manifest.json` into `dir`.
///
/// The wall-clock time goes to `timestamp.txt` only, so two runs of the same
/// spec produce byte-identical files everywhere else.
pub fn emit_outputs(spec: &ExperimentSpec, outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: String, contents: String| -> Result<()> {
        let path = dir.join(&name);
        write(&path, &contents)?;
        files.push(path);
        Ok(())
    };
    put("results.csv".into(), outcome.table.to_csv_string())?;
    for metric in outcome.table.metrics() {
        put(format!("wide_{metric}.csv"), outcome.table.wide_csv(&metric))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "metric", "value"])?;
    for s in &outcome.summary {
        w.write_record([s.policy.as_str(), s.metric.as_str(), &s.value.to_string()])?;
    }
    put("summary.csv".into(), csv_text(w)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "severity", "passed", "detail"])?;
    for c in &outcome.checks {
        let sev = format!("{:?}", c.severity).to_lowercase();
        w.write_record([c.name.as_str(), &sev, &c.passed.to_string(), c.detail.as_str()])?;
    }
    put("checks.csv".into(), csv_text(w)?)?;
    put("spec.toml".into(), spec.to_toml_string())?;

    let manifest = Manifest {
        name: spec.name.clone(),
        family: spec.family.label().into(),
        spec_hash: spec.hash(),
        seeds: spec.seeds.clone(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        assertions_failed: outcome.failed_assertions().iter().map(|c| c.name.clone()).collect(),
        warnings: outcome.warnings().iter().map(|c| c.name.clone()).collect(),
    };
    let path = dir.join("manifest.json");
    write(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    files.push(path);

    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let path = dir.join("timestamp.txt");
    write(&path, &format!("{stamp}\n"))?;
    files.push(path);
    Ok(files)
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| ExperimentError::io("<buffer>", e.into_error()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}
