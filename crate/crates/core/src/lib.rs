//! Simulation and numerics for one-dimensional branching Brownian motion
//! with drift `-ρ` and net branching rate `βx`.
//!
//! The crate provides the Airy kernel ([`airy`]), model parameters and the
//! derived levels ([`model`]), closed-form and spectral densities
//! ([`densities`]), a Monte Carlo engine ([`engine`]), population statistics
//! ([`stats`]), and the large-deviation heuristics ([`heuristics`]).

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod airy;
mod dd;
pub mod densities;
pub mod engine;
pub mod error;
pub mod fmt;
pub mod heuristics;
pub mod model;
pub mod quad;
pub mod stats;

pub use airy::{ai, ai_prime, airy_zero, edge_cdf, edge_density, edge_norm, gamma1, laplace_growth, EdgeLaw};
pub use densities::{
    bulk_gaussian_approx, expected_hits, free_density, free_mass, hit_rate, killed_bm_density, killed_density,
    SpectralSeries,
};
pub use engine::{
    evolve, init_edge_cloud, init_point, run_replicas, survival_probe, Ensemble, EnsembleConfig, EventLog, InitSpec,
    Particle, PopulationState, RngSpec, StepPolicy,
};
pub use error::{Error, Result};
pub use heuristics::{discrete_map, ld_exponent, ld_exponent_gauss, ld_trajectory, DiscreteMapping, TrajectoryCurve};
pub use model::{barrier_level, level, rates, windows, z_weight, Barrier, ModelParams, RateProfile};
pub use stats::{
    bulk_measure, distance, edge_measure, martingale_test, predicted_population, summary, weighted_functional,
    EmpiricalMeasure, Metric, Reference, SummarySnapshot,
};
