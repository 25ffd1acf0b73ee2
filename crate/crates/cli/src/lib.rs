//! Batch experiment runner for the `bbmwave` binary.

pub mod config;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::Path;
use std::time::Instant;

use bbmwave_core::{Error, Result};

pub use config::{Experiment, ExperimentConfig};
pub use experiments::run_experiment;
pub use output::{Metrics, Outcome};

/// Exit status for a result: 0 on success, 3 for numeric and capacity
/// failures, 2 for everything else.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_runtime() => 3,
        Err(_) => 2,
    }
}

/// Runs one experiment into `dir`: manifest first, then the experiment
/// files, then `metrics.json`, then the final manifest.
pub fn run_to_dir(experiment: Experiment, config: &ExperimentConfig, dir: &Path, threads: usize) -> Result<Outcome> {
    config.validate(experiment)?;
    fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let info = output::ManifestInfo {
        experiment,
        config,
        threads,
    };
    output::write_manifest(dir, &info, "running", None, None, Vec::new())?;
    let start = Instant::now();
    let result = run_experiment(experiment, config).and_then(|o| {
        let files = output::write_outputs(dir, experiment, config, &o)?;
        Ok((o, files))
    });
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok((outcome, files)) => {
            output::write_manifest(dir, &info, "complete", Some(wall), None, files)?;
            Ok(outcome)
        }
        Err(e) => {
            output::write_manifest(dir, &info, "failed", Some(wall), Some(e.to_string()), Vec::new())?;
            Err(e)
        }
    }
}
