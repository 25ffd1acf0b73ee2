//! Experiment configuration, read from TOML.
//!
//! All quantities are in model units. Unknown keys are rejected.

use std::path::PathBuf;

use bbmwave_core::engine::{InitSpec, StepPolicy};
use bbmwave_core::model::{Barrier, ModelParams};
use bbmwave_core::{Error, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    VerifyAiry,
    VerifyDensity,
    Martingale,
    BulkGauss,
    EdgeProfile,
    Survival,
    Hits,
    HeuristicCurve,
    Calibrate,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::VerifyAiry => "verify-airy",
            Experiment::VerifyDensity => "verify-density",
            Experiment::Martingale => "martingale",
            Experiment::BulkGauss => "bulk-gauss",
            Experiment::EdgeProfile => "edge-profile",
            Experiment::Survival => "survival",
            Experiment::Hits => "hits",
            Experiment::HeuristicCurve => "heuristic-curve",
            Experiment::Calibrate => "calibrate",
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(
            self,
            Experiment::Simulate
                | Experiment::Martingale
                | Experiment::BulkGauss
                | Experiment::EdgeProfile
                | Experiment::Survival
                | Experiment::Hits
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    pub max_terms: usize,
    pub abs_tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            max_terms: bbmwave_core::densities::DEFAULT_MAX_TERMS,
            abs_tol: bbmwave_core::densities::DEFAULT_ABS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AiryConfig {
    /// Number of zeros tabulated.
    pub zeros: usize,
    /// Size of the orthogonality matrix.
    pub orth: usize,
}

impl Default for AiryConfig {
    fn default() -> Self {
        Self { zeros: 20, orth: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Offset `A` of the killing level.
    pub a: f64,
    /// Curve time; `2β^{-2/3}` when absent.
    pub t: Option<f64>,
    /// Start point as a distance below `L_A`.
    pub depth: f64,
    pub points: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            a: 0.0,
            t: None,
            depth: 1.0,
            points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub x: f64,
    pub delta: f64,
    /// `ln(1/δ)/(δβx)` when absent.
    pub horizon: Option<f64>,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            x: 10.0,
            delta: 0.25,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitsConfig {
    pub u: f64,
    pub v: f64,
    pub bins: usize,
}

impl Default for HitsConfig {
    fn default() -> Self {
        Self {
            u: 1.0,
            v: 10.0,
            bins: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Curve range; `±ρ²/2β` when absent.
    pub z_lo: Option<f64>,
    pub z_hi: Option<f64>,
    pub points: usize,
    pub trajectory_z: f64,
    /// Trajectory horizon; the run `horizon` when absent.
    pub trajectory_horizon: Option<f64>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            z_lo: None,
            z_hi: None,
            points: 201,
            trajectory_z: 0.0,
            trajectory_horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub n: f64,
    pub mu: f64,
    pub s: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            n: 1e6,
            mu: 1e-4,
            s: 1e-2,
        }
    }
}

fn default_init() -> InitSpec {
    InitSpec::Point { x: 0.0 }
}

fn default_replicas() -> u64 {
    1
}

fn default_offsets() -> Vec<f64> {
    vec![0.0]
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_keep_states() -> bool {
    true
}

fn default_cdf_points() -> usize {
    401
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional here; the command line names the experiment and the two
    /// must agree when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Offsets `A` for which `Z_A` is recorded.
    #[serde(default = "default_offsets")]
    pub offsets: Vec<f64>,
    /// Dump particle states at each snapshot (`simulate`).
    #[serde(default = "default_keep_states")]
    pub keep_states: bool,
    /// Grid size of exported CDF curves.
    #[serde(default = "default_cdf_points")]
    pub cdf_points: usize,
    pub params: ModelParams,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    #[serde(default)]
    pub barrier: Barrier,
    #[serde(default)]
    pub step: StepPolicy,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default)]
    pub airy: AiryConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
    #[serde(default)]
    pub hits: HitsConfig,
    #[serde(default)]
    pub heuristic: HeuristicConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
}

impl ExperimentConfig {
    pub fn new(params: ModelParams) -> Self {
        Self {
            experiment: None,
            seed: 0,
            replicas: default_replicas(),
            horizon: 0.0,
            snapshot_times: Vec::new(),
            outputs: default_outputs(),
            offsets: default_offsets(),
            keep_states: default_keep_states(),
            cdf_points: default_cdf_points(),
            params,
            init: default_init(),
            barrier: Barrier::None,
            step: StepPolicy::default(),
            series: SeriesConfig::default(),
            airy: AiryConfig::default(),
            density: DensityConfig::default(),
            survival: SurvivalConfig::default(),
            hits: HitsConfig::default(),
            heuristic: HeuristicConfig::default(),
            calibrate: CalibrateConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Snapshot times, or just the horizon when none are configured.
    pub fn snapshots(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.horizon]
        } else {
            self.snapshot_times.clone()
        }
    }

    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(Error::Usage(format!(
                    "config is for {} but {} was requested",
                    e.name(),
                    experiment.name()
                )));
            }
        }
        self.params.validate()?;
        self.step.validate()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("snapshot_times must be sorted".into()));
        }
        if let Some(s) = self
            .snapshot_times
            .iter()
            .find(|&&s| !(0.0..=self.horizon).contains(&s))
        {
            return Err(Error::Config(format!(
                "snapshot time {s} lies outside [0, {}]",
                self.horizon
            )));
        }
        if experiment.is_monte_carlo() && self.replicas < 1 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.series.max_terms == 0 || self.series.abs_tol.is_nan() || self.series.abs_tol <= 0.0 {
            return Err(Error::Config("series needs max_terms >= 1 and abs_tol > 0".into()));
        }
        if self.offsets.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("offsets must be finite".into()));
        }
        match experiment {
            Experiment::Martingale | Experiment::Hits => {
                if !matches!(self.barrier, Barrier::Fixed { .. }) {
                    return Err(Error::Config(format!("{} needs a fixed barrier", experiment.name())));
                }
                if !matches!(self.init, InitSpec::Point { .. }) {
                    return Err(Error::Config(format!("{} needs a point start", experiment.name())));
                }
            }
            _ => {}
        }
        if experiment == Experiment::Hits {
            let h = &self.hits;
            if !(0.0 <= h.u && h.u < h.v && h.v <= self.horizon) || h.bins == 0 {
                return Err(Error::Config(format!(
                    "hits window [{}, {}] must lie in [0, horizon = {}] with at least one bin",
                    h.u, h.v, self.horizon
                )));
            }
        }
        Ok(())
    }
}
