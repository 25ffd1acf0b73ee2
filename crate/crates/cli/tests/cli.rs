use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bbmwave_cli::{Experiment, ExperimentConfig};
use clap::ValueEnum;

fn bbmwave(args: &[&str], config: Option<&Path>, out: &Path, threads: &str) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bbmwave"));
    cmd.args(args).arg("--out").arg(out).env("BBMWAVE_THREADS", threads);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn shipped_configs_parse_and_validate() {
    for e in Experiment::value_variants() {
        let path = configs_dir().join(format!("{}.toml", e.name()));
        let config = ExperimentConfig::parse(&fs::read_to_string(&path).unwrap()).unwrap();
        config
            .validate(*e)
            .unwrap_or_else(|err| panic!("{}: {err}", path.display()));
    }
}

#[test]
fn verify_airy_reports_the_first_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs_dir().join("verify-airy.toml");
    let out = bbmwave(&["verify-airy"], Some(&config), tmp.path(), "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = json(&tmp.path().join("metrics.json"));
    let g1 = metrics["metrics"]["gamma1"]["value"].as_f64().unwrap();
    assert!((g1 + 2.33811).abs() < 1e-4);
    let manifest = json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["experiment"], "verify-airy");
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    for f in manifest["files"].as_array().unwrap() {
        assert!(tmp.path().join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs_dir().join("simulate.toml");
    let mut runs = Vec::new();
    for (name, threads) in [("a", "4"), ("b", "4"), ("c", "1")] {
        let dir = tmp.path().join(name);
        let out = bbmwave(&["simulate", "--replicas", "6"], Some(&config), &dir, threads);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<(String, Vec<u8>)> = ["metrics.json", "summaries.csv", "snapshots.csv", "events.json"]
            .iter()
            .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
            .collect();
        files.sort();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs_dir().join("simulate.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(bbmwave(&["simulate", "--seed", "1"], Some(&config), &a, "1")
        .status
        .success());
    assert!(bbmwave(&["simulate", "--seed", "2"], Some(&config), &b, "1")
        .status
        .success());
    assert_ne!(
        fs::read(a.join("events.json")).unwrap(),
        fs::read(b.join("events.json")).unwrap()
    );
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs_dir().join("simulate.toml");
    let out = bbmwave(&["no-such-experiment"], Some(&config), tmp.path(), "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_configs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "seed = 1\nbogus_key = 3\n",
        "[params]\nrho = -0.5\nbeta = 0.01\ndelta = 0.5\n",
        "experiment = \"hits\"\n",
        "seed = \"not a number\"\n",
        "[step]\ndt_maximum = 0.1\n",
        "[init]\nkind = \"point\"\nx = 1.0\ny = 2.0\n",
        "[barrier]\nkind = \"sliding\"\na = 0.0\n",
    ];
    for text in cases {
        let config = write_config(tmp.path(), text);
        let out = bbmwave(&["simulate"], Some(&config), &tmp.path().join("out"), "1");
        assert_eq!(
            out.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = bbmwave(
        &["simulate"],
        Some(&tmp.path().join("missing.toml")),
        &tmp.path().join("out"),
        "1",
    );
    assert_eq!(out.status.code(), Some(2));
    let config = configs_dir().join("simulate.toml");
    let out = bbmwave(&["simulate"], Some(&config), &tmp.path().join("out"), "zero");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn particle_budget_overflow_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "seed = 3\nreplicas = 1\nhorizon = 1.0\n\n[params]\nrho = 0.5\nbeta = 0.01\ndelta = 0.5\n\n\
                [init]\nkind = \"edge_cloud\"\nu = 4.0\n\n[step]\nparticle_budget = 10\n";
    let config = write_config(tmp.path(), text);
    let dir = tmp.path().join("out");
    let out = bbmwave(&["simulate"], Some(&config), &dir, "1");
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("budget"), "{manifest}");
    assert!(!dir.join("metrics.json").exists());
}
