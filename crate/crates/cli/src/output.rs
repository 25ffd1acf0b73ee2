//! Run artifacts: manifest, metrics and CSV files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bbmwave_core::{Error, Result};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

/// A scalar result with an optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Value {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Metrics {
    pub values: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
}

impl Metrics {
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), Value { value, se: None });
    }

    pub fn set_with_se(&mut self, name: impl Into<String>, value: f64, se: f64) {
        self.values.insert(name.into(), Value { value, se: Some(se) });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|v| v.value)
    }

    pub fn get_se(&self, name: &str) -> Option<f64> {
        self.values.get(name).and_then(|v| v.se)
    }
}

/// Everything an experiment produces, written by [`write_outputs`].
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub metrics: Metrics,
    /// File name and contents, in write order.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn file(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    experiment: &'a str,
    seed: u64,
    replicas: u64,
    metrics: &'a BTreeMap<String, Value>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    status: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    versions: BTreeMap<&'a str, &'a str>,
    threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    files: Vec<String>,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Usage(format!("cannot write {}: {e}", path.display()))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
    f.write_all(contents).map_err(|e| io_error(&tmp, e))?;
    f.sync_all().map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

pub struct ManifestInfo<'a> {
    pub experiment: Experiment,
    pub config: &'a ExperimentConfig,
    pub threads: usize,
}

pub fn write_manifest(
    dir: &Path,
    info: &ManifestInfo,
    status: &str,
    wall_time_s: Option<f64>,
    error: Option<String>,
    files: Vec<String>,
) -> Result<()> {
    let manifest = Manifest {
        experiment: info.experiment.name(),
        status,
        seed: info.config.seed,
        config: info.config,
        versions: BTreeMap::from([
            ("bbmwave", env!("CARGO_PKG_VERSION")),
            ("bbmwave_core", bbmwave_core::VERSION),
        ]),
        threads: info.threads,
        wall_time_s,
        error,
        files,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Numeric(format!("manifest: {e}")))?;
    write_atomic(&dir.join("manifest.json"), &text)
}

/// Writes the experiment files, then `metrics.json`. Returns the names
/// written.
pub fn write_outputs(
    dir: &Path,
    experiment: Experiment,
    config: &ExperimentConfig,
    outcome: &Outcome,
) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(outcome.files.len() + 1);
    for (name, contents) in &outcome.files {
        write_atomic(&dir.join(name), contents)?;
        names.push(name.clone());
    }
    names.push("metrics.json".to_string());
    write_atomic(
        &dir.join("metrics.json"),
        &metrics_json(experiment, config, &outcome.metrics)?,
    )?;
    Ok(names)
}

pub fn metrics_json(experiment: Experiment, config: &ExperimentConfig, metrics: &Metrics) -> Result<Vec<u8>> {
    let file = MetricsFile {
        experiment: experiment.name(),
        seed: config.seed,
        replicas: config.replicas,
        metrics: &metrics.values,
        warnings: &metrics.warnings,
    };
    let mut text = serde_json::to_vec_pretty(&file).map_err(|e| Error::Numeric(format!("metrics: {e}")))?;
    text.push(b'\n');
    Ok(text)
}
