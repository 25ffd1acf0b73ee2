//! Monte Carlo particle engine. Particles follow Brownian motion with drift
//! `-ρ`, branch at rate `b(x)`, die at rate `d(x)`, and are optionally
//! absorbed at a barrier. Time is discretized with an Euler scheme and one
//! uniform draw per particle per step decides branch, death, or neither.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::Num;
use crate::model::{barrier_level, rates, Barrier, ModelParams};
use crate::stats::{summary, SummarySnapshot};

pub const DEFAULT_PARTICLE_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PopulationState {
    pub time: f64,
    pub particles: Vec<Particle>,
    next_id: u64,
}

impl PopulationState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `n` particles at `x`, time 0.
    pub fn cloud(x: f64, n: usize) -> Self {
        Self {
            time: 0.0,
            particles: (0..n as u64)
                .map(|id| Particle {
                    id,
                    parent_id: None,
                    position: x,
                })
                .collect(),
            next_id: n as u64,
        }
    }

    pub fn from_positions(time: f64, positions: &[f64]) -> Self {
        Self {
            time,
            particles: positions
                .iter()
                .enumerate()
                .map(|(i, &x)| Particle {
                    id: i as u64,
                    parent_id: None,
                    position: x,
                })
                .collect(),
            next_id: positions.len() as u64,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.particles.iter().map(|p| p.position)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

/// A single particle at `x` at time 0.
pub fn init_point(x: f64) -> PopulationState {
    PopulationState::cloud(x, 1)
}

/// Number of particles placed at `L − u` by [`init_edge_cloud`]:
/// `⌈e^{ρu}/(uρ³)⌉`.
pub fn edge_cloud_count(params: &ModelParams, u: f64) -> Result<f64> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::Domain(format!("edge cloud offset must be positive, got {u}")));
    }
    Ok(((params.rho * u).exp() / (u * params.rho.powi(3))).ceil())
}

/// Describes why `u` falls outside `(1/ρ, β^{-1/3}]`, if it does.
pub fn edge_cloud_advisory(params: &ModelParams, u: f64) -> Option<String> {
    let lo = 1.0 / params.rho;
    let hi = params.beta.powf(-1.0 / 3.0);
    (!(u > lo && u <= hi)).then(|| format!("edge cloud offset u = {u} is outside the recommended ({lo}, {hi}]"))
}

/// `⌈e^{ρu}/(uρ³)⌉` particles at `L − u`.
pub fn init_edge_cloud(params: &ModelParams, u: f64, budget: usize) -> Result<PopulationState> {
    let count = edge_cloud_count(params, u)?;
    if !(count <= budget as f64) {
        return Err(Error::Capacity {
            message: format!("edge cloud at u = {u} needs {count} particles, budget is {budget}"),
            partial: None,
        });
    }
    Ok(PopulationState::cloud(params.edge() - u, count as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorption {
    pub time: f64,
    pub position: f64,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub absorptions: Vec<Absorption>,
    pub births: u64,
    pub deaths: u64,
    pub max_position_seen: f64,
}

impl Default for EventLog {
    fn default() -> Self {
        Self {
            absorptions: Vec::new(),
            births: 0,
            deaths: 0,
            max_position_seen: f64::NEG_INFINITY,
        }
    }
}

impl EventLog {
    pub fn absorbed_between(&self, u: f64, v: f64) -> usize {
        self.absorptions.iter().filter(|a| a.time > u && a.time <= v).count()
    }

    /// Summary with absorption counts binned by time.
    pub fn digest(&self, replica: u64, horizon: f64, bins: usize) -> EventDigest {
        let bins = bins.max(1);
        let width = horizon / bins as f64;
        let mut histogram = vec![0u64; bins];
        for a in &self.absorptions {
            let i = if width > 0.0 {
                ((a.time / width) as usize).min(bins - 1)
            } else {
                0
            };
            histogram[i] += 1;
        }
        EventDigest {
            replica,
            births: self.births,
            deaths: self.deaths,
            absorptions: self.absorptions.len() as u64,
            max_position_seen: self.max_position_seen,
            bin_width: width,
            absorption_histogram: histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDigest {
    pub replica: u64,
    pub births: u64,
    pub deaths: u64,
    pub absorptions: u64,
    pub max_position_seen: f64,
    pub bin_width: f64,
    pub absorption_histogram: Vec<u64>,
}

/// Master seed plus per-replica stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self { master_seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepPolicy {
    pub dt_max: f64,
    /// Cap on `(b + d)Δt` at the extreme particles.
    pub max_event_prob: f64,
    pub particle_budget: usize,
    pub position_ceiling: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            dt_max: 0.01,
            max_event_prob: 0.05,
            particle_budget: DEFAULT_PARTICLE_BUDGET,
            position_ceiling: None,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Config(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if !(self.max_event_prob > 0.0 && self.max_event_prob <= 0.5) {
            return Err(Error::Config(format!(
                "max_event_prob must lie in (0, 0.5], got {}",
                self.max_event_prob
            )));
        }
        if self.particle_budget == 0 {
            return Err(Error::Config("particle budget must be positive".into()));
        }
        Ok(())
    }
}

fn capacity(message: String, log: &EventLog) -> Error {
    Error::Capacity {
        message,
        partial: Some(Box::new(log.clone())),
    }
}

/// Advances `state` to `horizon`, appending events to `log`.
pub fn evolve_into<R: Rng + ?Sized>(
    mut state: PopulationState,
    params: &ModelParams,
    barrier: &Barrier,
    horizon: f64,
    step: &StepPolicy,
    rng: &mut R,
    log: &mut EventLog,
) -> Result<PopulationState> {
    if !(horizon >= state.time && horizon.is_finite()) {
        return Err(Error::Domain(format!(
            "horizon {horizon} precedes the state time {}",
            state.time
        )));
    }
    let mut t = state.time;
    let mut particles = std::mem::take(&mut state.particles);
    if particles.len() > step.particle_budget {
        state.particles = particles;
        return Err(capacity(
            format!(
                "{} particles exceed the budget of {}",
                state.len(),
                step.particle_budget
            ),
            log,
        ));
    }
    let start_level = barrier_level(barrier, params, t)?;
    particles.retain(|p| {
        if p.position >= start_level {
            log.absorptions.push(Absorption {
                time: t,
                position: p.position,
                id: p.id,
            });
            false
        } else {
            true
        }
    });
    for p in &particles {
        log.max_position_seen = log.max_position_seen.max(p.position);
    }

    let mut next: Vec<Particle> = Vec::with_capacity(particles.len());
    while t < horizon && !particles.is_empty() {
        let (lo, hi) = particles
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.position), hi.max(p.position))
            });
        let total = |x: f64| {
            let (b, d) = rates(params, x);
            b + d
        };
        let rate_max = total(lo).max(total(hi));
        let remaining = horizon - t;
        let mut dt = step.dt_max.min(remaining);
        if rate_max > 0.0 {
            dt = dt.min(step.max_event_prob / rate_max);
        }
        let t_new = if remaining - dt <= 1e-12 * horizon.abs().max(1.0) {
            dt = remaining;
            horizon
        } else {
            t + dt
        };
        let level = barrier_level(barrier, params, t_new)?;
        let drift = -params.rho * dt;
        let sd = dt.sqrt();
        next.clear();
        for p in particles.drain(..) {
            let z: f64 = rng.sample(StandardNormal);
            let x = p.position + drift + sd * z;
            if !x.is_finite() {
                return Err(Error::Numeric(format!(
                    "particle {} reached a non-finite position",
                    p.id
                )));
            }
            if x >= level {
                log.absorptions.push(Absorption {
                    time: t_new,
                    position: x,
                    id: p.id,
                });
                continue;
            }
            if x > log.max_position_seen {
                log.max_position_seen = x;
                if let Some(c) = step.position_ceiling {
                    if x > c {
                        return Err(capacity(
                            format!("particle {} reached {x}, above the ceiling {c}, at t = {t_new}", p.id),
                            log,
                        ));
                    }
                }
            }
            let (b, d) = rates(params, x);
            let u: f64 = rng.random();
            let moved = Particle { position: x, ..p };
            if u < b * dt {
                next.push(moved);
                let id = state.fresh_id();
                next.push(Particle {
                    id,
                    parent_id: Some(p.id),
                    position: x,
                });
                log.births += 1;
            } else if u < (b + d) * dt {
                log.deaths += 1;
            } else {
                next.push(moved);
            }
        }
        std::mem::swap(&mut particles, &mut next);
        t = t_new;
        if particles.len() > step.particle_budget {
            return Err(capacity(
                format!(
                    "population reached {} at t = {t}, above the budget of {}",
                    particles.len(),
                    step.particle_budget
                ),
                log,
            ));
        }
    }
    state.particles = particles;
    state.time = horizon;
    Ok(state)
}

/// Advances `state` to `horizon` and returns the new state with the events
/// observed on the way.
pub fn evolve<R: Rng + ?Sized>(
    state: PopulationState,
    params: &ModelParams,
    barrier: &Barrier,
    horizon: f64,
    step: &StepPolicy,
    rng: &mut R,
) -> Result<(PopulationState, EventLog)> {
    let mut log = EventLog::default();
    let state = evolve_into(state, params, barrier, horizon, step, rng, &mut log)?;
    Ok((state, log))
}

/// Survival estimate with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub ci95: (f64, f64),
    pub survivors: u64,
    pub replicas: u64,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `C₁/(βx)` with `C₁ = ln(1/δ)/δ`.
pub fn survival_horizon(params: &ModelParams, x: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && (1.0 + delta) / (1.0 - delta) < 2.0) {
        return Err(Error::Domain(format!(
            "delta must satisfy (1+δ)/(1−δ) < 2, got {delta}"
        )));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("survival start must be positive, got {x}")));
    }
    Ok((1.0 / delta).ln() / delta / (params.beta * x))
}

/// `2βx/Δ`.
pub fn survival_bound(params: &ModelParams, x: f64) -> f64 {
    2.0 * params.beta * x / params.delta
}

/// Fraction of replicas started from one particle at `x` that still have a
/// particle alive at `horizon`.
pub fn survival_probe(
    params: &ModelParams,
    x: f64,
    horizon: f64,
    replicas: u64,
    step: &StepPolicy,
    seed: u64,
) -> Result<SurvivalEstimate> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("survival start must be positive, got {x}")));
    }
    let alive: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngSpec::new(seed, r).rng();
            evolve(init_point(x), params, &Barrier::None, horizon, step, &mut rng)
                .map(|(s, _)| !s.is_empty())
                .map_err(|e| Error::Replica {
                    replica: r,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let survivors = alive.iter().filter(|&&a| a).count() as u64;
    let p_hat = if replicas == 0 {
        1.0
    } else {
        survivors as f64 / replicas as f64
    };
    Ok(SurvivalEstimate {
        p_hat,
        ci95: wilson_interval(survivors, replicas),
        survivors,
        replicas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// One particle at `x`.
    Point { x: f64 },
    /// The edge cloud at `L − u`.
    EdgeCloud { u: f64 },
}

impl InitSpec {
    pub fn build(&self, params: &ModelParams, budget: usize) -> Result<PopulationState> {
        match *self {
            InitSpec::Point { x } => Ok(init_point(x)),
            InitSpec::EdgeCloud { u } => init_edge_cloud(params, u, budget),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub params: ModelParams,
    pub init: InitSpec,
    pub barrier: Barrier,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub replicas: u64,
    pub step: StepPolicy,
    /// Offsets `A` for which `Z_A` is recorded in each snapshot.
    pub offsets: Vec<f64>,
    /// Keep the particle configurations at each snapshot.
    pub keep_states: bool,
}

impl EnsembleConfig {
    pub fn new(params: ModelParams, init: InitSpec, horizon: f64) -> Self {
        Self {
            params,
            init,
            barrier: Barrier::None,
            horizon,
            snapshot_times: vec![horizon],
            replicas: 1,
            step: StepPolicy::default(),
            offsets: vec![0.0],
            keep_states: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.step.validate()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("snapshot times must be sorted".into()));
        }
        if self.snapshot_times.iter().any(|&s| !(0.0..=self.horizon).contains(&s)) {
            return Err(Error::Config("snapshot times must lie in [0, horizon]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReplicaResult {
    pub replica: u64,
    pub snapshots: Vec<SummarySnapshot>,
    /// Configurations at the snapshot times, when requested.
    pub states: Vec<PopulationState>,
    pub log: EventLog,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: EnsembleConfig,
    pub master_seed: u64,
    pub replicas: Vec<ReplicaResult>,
}

fn run_one(config: &EnsembleConfig, spec: RngSpec) -> Result<ReplicaResult> {
    let mut rng = spec.rng();
    let mut state = config.init.build(&config.params, config.step.particle_budget)?;
    let mut log = EventLog::default();
    let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
    let mut states = Vec::new();
    for &s in &config.snapshot_times {
        state = evolve_into(
            state,
            &config.params,
            &config.barrier,
            s,
            &config.step,
            &mut rng,
            &mut log,
        )?;
        snapshots.push(summary(&state, &config.params, &config.offsets));
        if config.keep_states {
            states.push(state.clone());
        }
    }
    evolve_into(
        state,
        &config.params,
        &config.barrier,
        config.horizon,
        &config.step,
        &mut rng,
        &mut log,
    )?;
    Ok(ReplicaResult {
        replica: spec.stream,
        snapshots,
        states,
        log,
    })
}

/// Runs `config.replicas` independent replicas in parallel. Replica `r`
/// draws from stream `r` of the master seed, so results do not depend on
/// scheduling.
pub fn run_replicas(config: &EnsembleConfig, master_seed: u64) -> Result<Ensemble> {
    config.validate()?;
    let replicas = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            run_one(config, RngSpec::new(master_seed, r)).map_err(|e| Error::Replica {
                replica: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        config: config.clone(),
        master_seed,
        replicas,
    })
}

impl Ensemble {
    /// Snapshot values of `f` across replicas at snapshot index `i`.
    pub fn column(&self, i: usize, f: impl Fn(&SummarySnapshot) -> f64) -> Vec<f64> {
        self.replicas.iter().map(|r| f(&r.snapshots[i])).collect()
    }

    pub fn digests(&self, bins: usize) -> Vec<EventDigest> {
        self.replicas
            .iter()
            .map(|r| r.log.digest(r.replica, self.config.horizon, bins))
            .collect()
    }

    /// Writes kept configurations as `replica,time,id,parent_id,position`.
    pub fn write_snapshot_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "replica,time,id,parent_id,position")?;
        for r in &self.replicas {
            for s in &r.states {
                for p in &s.particles {
                    let parent = p.parent_id.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        r.replica,
                        Num(s.time),
                        p.id,
                        parent,
                        Num(p.position)
                    )?;
                }
            }
        }
        Ok(())
    }
}
