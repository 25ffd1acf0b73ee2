//! Model parameters, the birth/death rate profile, and the levels and
//! curves derived from them: the right edge `L_A`, the moving barrier, the
//! splitting windows, and the `z`-weight.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::airy::{ai, gamma1};
use crate::engine::PopulationState;
use crate::error::{Error, Result};
use crate::stats::summary;

/// Signature for programmatic rate profiles: `x -> (b(x), d(x))`.
#[derive(Clone)]
pub struct RateFn(pub Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>);

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RateFn(..)")
    }
}

impl RateFn {
    pub fn new(f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        RateFn(Arc::new(f))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateProfile {
    /// `d = 1, b = 1 + βx` for `x ≥ -1/β`; `d = -βx, b = 0` below.
    #[default]
    DefaultLinear,
    /// Piecewise-linear birth and death rates through the given nodes,
    /// extrapolated linearly beyond the first and last node.
    Tabulated {
        x: Vec<f64>,
        birth: Vec<f64>,
        death: Vec<f64>,
    },
    /// Callback profile; not representable in config files.
    #[serde(skip)]
    Callback(RateFn),
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

impl RateProfile {
    #[inline]
    fn eval(&self, beta: f64, x: f64) -> (f64, f64) {
        match self {
            RateProfile::DefaultLinear => {
                if x >= -1.0 / beta {
                    (1.0 + beta * x, 1.0)
                } else {
                    (0.0, -beta * x)
                }
            }
            RateProfile::Tabulated { x: xs, birth, death } => (interp(xs, birth, x), interp(xs, death, x)),
            RateProfile::Callback(f) => (f.0)(x),
        }
    }
}

/// Drift `-ρ`, net branching slope `β`, and the rate floor `Δ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub rho: f64,
    pub beta: f64,
    pub delta: f64,
    #[serde(default)]
    pub rate_profile: RateProfile,
}

/// Half-width of the validation grid when `β = 0`.
pub const CRITICAL_WINDOW: f64 = 1e3;

/// Number of grid points used to validate a rate profile.
pub const VALIDATION_POINTS: usize = 1000;

impl ModelParams {
    /// Parameters with the default linear profile, validated.
    pub fn new(rho: f64, beta: f64, delta: f64) -> Result<Self> {
        Self::with_profile(rho, beta, delta, RateProfile::DefaultLinear)
    }

    pub fn with_profile(rho: f64, beta: f64, delta: f64, rate_profile: RateProfile) -> Result<Self> {
        let p = Self {
            rho,
            beta,
            delta,
            rate_profile,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the scalar ranges and samples the rate profile on a grid of
    /// [`VALIDATION_POINTS`] points across `[-2/β, 2/β]`, or across
    /// `±CRITICAL_WINDOW` in the critical case `β = 0`.
    pub fn validate(&self) -> Result<()> {
        let Self { rho, beta, delta, .. } = *self;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {rho}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be nonnegative, got {beta}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if let RateProfile::Tabulated { x, birth, death } = &self.rate_profile {
            if x.is_empty() || x.len() != birth.len() || x.len() != death.len() {
                return Err(Error::Config(
                    "tabulated profile needs equal, nonempty x/birth/death".into(),
                ));
            }
            if x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "tabulated profile nodes must be strictly increasing".into(),
                ));
            }
        }
        let half = if beta > 0.0 { 2.0 / beta } else { CRITICAL_WINDOW };
        let (lo, hi) = (-half, half);
        for i in 0..VALIDATION_POINTS {
            let x = lo + (hi - lo) * i as f64 / (VALIDATION_POINTS - 1) as f64;
            let (b, d) = self.rate_profile.eval(beta, x);
            if !(b >= 0.0 && d >= 0.0) {
                return Err(Error::Config(format!("negative rate at x = {x}: b = {b}, d = {d}")));
            }
            let net = beta * x;
            if (b - d - net).abs() > 1e-12 * net.abs().max(b.abs() + d.abs()).max(1.0) {
                return Err(Error::Config(format!(
                    "b - d must equal beta*x: at x = {x}, b - d = {} but beta*x = {net}",
                    b - d
                )));
            }
            if d < delta {
                return Err(Error::Config(format!("death rate {d} below floor {delta} at x = {x}")));
            }
            if x <= 1.0 / beta && b > 1.0 / delta {
                return Err(Error::Config(format!(
                    "birth rate {b} exceeds 1/delta = {} at x = {x} <= 1/beta",
                    1.0 / delta
                )));
            }
        }
        Ok(())
    }

    /// `(2β)^{1/3}`, the natural inverse length scale near the edge.
    pub fn airy_scale(&self) -> f64 {
        (2.0 * self.beta).cbrt()
    }

    /// `ρ²/2β`, where the net branching rate balances the drift.
    pub fn balance_point(&self) -> f64 {
        self.rho * self.rho / (2.0 * self.beta)
    }

    /// `ρ/β`, the time for the bulk to form.
    pub fn relaxation_time(&self) -> f64 {
        self.rho / self.beta
    }

    pub fn edge(&self) -> f64 {
        level(self, 0.0)
    }
}

/// Birth and death rates `(b(x), d(x))`.
#[inline]
pub fn rates(params: &ModelParams, x: f64) -> (f64, f64) {
    params.rate_profile.eval(params.beta, x)
}

/// `L_A = ρ²/2β − (2β)^{−1/3}γ₁ − A/ρ`.
pub fn level(params: &ModelParams, a: f64) -> f64 {
    params.balance_point() - gamma1() / params.airy_scale() - a / params.rho
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Barrier {
    #[default]
    None,
    /// Absorb at the constant level `L_A`.
    Fixed { a: f64 },
    /// Absorb at `Λ_A(s) = L_A − (2A/ρ)(e^{2βs/ρ} − 1)`.
    Moving { a: f64 },
}

impl Barrier {
    pub fn offset(&self) -> Option<f64> {
        match *self {
            Barrier::None => None,
            Barrier::Fixed { a } | Barrier::Moving { a } => Some(a),
        }
    }
}

/// Absorption level at time `s`; `+∞` when there is no barrier.
pub fn barrier_level(barrier: &Barrier, params: &ModelParams, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("barrier time must be nonnegative, got {s}")));
    }
    Ok(match *barrier {
        Barrier::None => f64::INFINITY,
        Barrier::Fixed { a } => level(params, a),
        Barrier::Moving { a } => {
            let growth = (2.0 * params.beta * s / params.rho).exp_m1();
            level(params, a) - 2.0 * a / params.rho * growth
        }
    })
}

/// The splitting points `l(t)`, `K_A(t)` and `H_A(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Windows {
    pub l: f64,
    pub k_a: f64,
    pub h_a: f64,
}

pub fn windows(params: &ModelParams, a: f64, t: f64) -> Result<Windows> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("window time must be nonnegative, got {t}")));
    }
    let la = level(params, a);
    let bt2 = params.beta * t * t;
    let l = bt2 / 33.0;
    Ok(Windows {
        l,
        k_a: la - l / 2.0,
        h_a: la - bt2 / 9.0,
    })
}

/// `z_A(x) = e^{ρx} Ai((2β)^{1/3}(L_A − x) + γ₁)` below `L_A`, zero at and
/// above it.
pub fn z_weight(params: &ModelParams, a: f64, x: f64) -> f64 {
    let la = level(params, a);
    if x >= la {
        return 0.0;
    }
    (params.rho * x).exp() * ai(params.airy_scale() * (la - x) + gamma1())
}

/// Finite-size diagnostics for the asymptotic assumptions on the
/// parameters and the initial configuration.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub rho: f64,
    pub rho3_over_beta: f64,
    pub z0: f64,
    pub y0: f64,
    /// `ρ³β^{−1/3}e^{−ρL}Z(0)`; should be of order one.
    pub zasm_statistic: f64,
    /// `ρ²e^{−ρL}Y(0)`; should be small.
    pub yasm_statistic: f64,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Recommended lower limit for `ρ³/β`.
pub const RHO3_OVER_BETA_ADVISORY: f64 = 10.0;

pub fn assumption_report(params: &ModelParams, state: &PopulationState) -> AssumptionReport {
    let s = summary(state, params, &[0.0]);
    let (rho, beta) = (params.rho, params.beta);
    let l = params.edge();
    let z0 = s.z_for(0.0).unwrap_or(0.0);
    let y0 = s.y;
    let scale = (-rho * l).exp();
    let zasm_statistic = rho.powi(3) / beta.cbrt() * scale * z0;
    let yasm_statistic = rho * rho * scale * y0;
    let rho3_over_beta = rho.powi(3) / beta;
    let mut warnings = Vec::new();
    if rho3_over_beta < RHO3_OVER_BETA_ADVISORY {
        warnings.push(format!(
            "rho^3/beta = {rho3_over_beta:.3} is below the recommended {RHO3_OVER_BETA_ADVISORY}"
        ));
    }
    if rho >= 1.0 {
        warnings.push(format!("rho = {rho} is not small"));
    }
    let degenerate = s.n == 0 || z0 == 0.0;
    if degenerate {
        warnings.push("initial configuration has Z(0) = 0".into());
    } else if !(0.1..=10.0).contains(&zasm_statistic) {
        warnings.push(format!("Z(0) statistic {zasm_statistic:.3e} is far from order one"));
    }
    if yasm_statistic > 1.0 {
        warnings.push(format!("Y(0) statistic {yasm_statistic:.3e} is not small"));
    }
    AssumptionReport {
        rho,
        rho3_over_beta,
        z0,
        y0,
        zasm_statistic,
        yasm_statistic,
        degenerate,
        warnings,
    }
}
