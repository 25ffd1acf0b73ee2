//! Shared fixtures for the `kernels` benchmarks.

use bbmwave_core::engine::{init_edge_cloud, PopulationState, StepPolicy};
use bbmwave_core::model::ModelParams;

/// `(ρ, β, Δ) = (0.5, 0.01, 0.5)` with the default rates.
pub fn design_point() -> ModelParams {
    ModelParams::new(0.5, 0.01, 0.5).expect("valid parameters")
}

pub fn edge_cloud(params: &ModelParams, u: f64) -> PopulationState {
    init_edge_cloud(params, u, StepPolicy::default().particle_budget).expect("cloud fits the default budget")
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
