use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bbmwave_cli::{exit_code, run_to_dir, Experiment, ExperimentConfig};
use bbmwave_core::{Error, Result};
use clap::Parser;

/// Run a bbmwave experiment and write manifest.json, metrics.json and CSVs.
#[derive(Debug, Parser)]
#[command(name = "bbmwave", version)]
struct Args {
    experiment: Experiment,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config replica count.
    #[arg(long)]
    replicas: Option<u64>,
}

fn threads() -> Result<usize> {
    let n = match std::env::var("BBMWAVE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Usage(format!("BBMWAVE_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => return Ok(rayon::current_num_threads()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot start {n} threads: {e}")))?;
    Ok(n)
}

fn run(args: Args) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.replicas {
        config.replicas = r;
    }
    if let Some(o) = args.out {
        config.outputs = o;
    }
    let threads = threads()?;
    let dir = config.outputs.clone();
    let outcome = run_to_dir(args.experiment, &config, &dir, threads)?;
    for w in &outcome.metrics.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}: wrote {}", args.experiment.name(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = run(args);
    if let Err(e) = &result {
        eprintln!("bbmwave: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
