//! Expected-particle densities: the free process in closed form, the killed
//! process and barrier hit rates as truncated Airy eigen-expansions, and
//! explicit upper bounds usable at small times.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;

use crate::airy::{
    ai, ai_prime_gamma1, airy_zero_magnitude_lower_bound, airy_zero_table, gamma1, AiryZeroTable, AI_MAX,
};
use crate::error::{Error, Result};
use crate::fmt::Num;
use crate::model::{level, ModelParams};
use crate::quad::{integrate, QuadOptions};

pub const DEFAULT_MAX_TERMS: usize = 8192;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

/// Truncated eigen-expansion over the Airy zeros.
///
/// The number of terms used at time `t` is the smallest `K` for which a
/// rigorous bound on the discarded tail, relative to the leading exponential
/// `e^{aγ₁}` with `a = 2^{-1/3}β^{2/3}t`, is below `abs_tol`. The bound uses
/// `|Ai| ≤ AI_MAX`, `|Ai'(γ_k)| ≥ |Ai'(γ₁)|`, and
/// `|γ_k| ≥ (3π(4k−1)/8)^{2/3}`.
#[derive(Debug, Clone)]
pub struct SpectralSeries {
    max_terms: usize,
    abs_tol: f64,
    table: AiryZeroTable,
}

impl Default for SpectralSeries {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_TERMS, DEFAULT_ABS_TOL).expect("default Airy zero table converges")
    }
}

const TAIL_B: f64 = 3.0 * PI / 8.0;

/// `ln Γ(3/2, z)` for `z ≥ 0`.
fn ln_upper_gamma_3_2(z: f64) -> f64 {
    if z < 500.0 {
        let r = z.sqrt();
        (r * (-z).exp() + 0.5 * PI.sqrt() * libm::erfc(r)).ln()
    } else {
        // Leading terms of the asymptotic series; the truncation is an upper bound.
        0.5 * z.ln() - z + (1.0 + 0.5 / z).ln()
    }
}

impl SpectralSeries {
    pub fn new(max_terms: usize, abs_tol: f64) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::Config("spectral series needs at least one term".into()));
        }
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::Config(format!(
                "series tolerance must be positive, got {abs_tol}"
            )));
        }
        Ok(Self {
            max_terms,
            abs_tol,
            table: airy_zero_table(max_terms)?,
        })
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn table(&self) -> &AiryZeroTable {
        &self.table
    }

    fn decay_rate(params: &ModelParams, t: f64) -> f64 {
        params.beta / params.airy_scale() * t
    }

    /// Log of the bound on the terms after the first `k`, relative to the
    /// leading envelope `e^{aγ₁}`.
    fn ln_relative_tail(a: f64, k: usize) -> f64 {
        let uk = airy_zero_magnitude_lower_bound(k);
        let c = AI_MAX / ai_prime_gamma1();
        c.ln() + (3.0 / (8.0 * TAIL_B)).ln() + ln_upper_gamma_3_2(a * uk) - 1.5 * a.ln() - a * gamma1()
    }

    /// Bound on the discarded tail after `k` terms, relative to `e^{aγ₁}`.
    pub fn tail_bound(&self, params: &ModelParams, t: f64, k: usize) -> f64 {
        Self::ln_relative_tail(Self::decay_rate(params, t), k.max(1)).exp()
    }

    /// Smallest number of terms certified at time `t`.
    pub fn terms_for(&self, params: &ModelParams, t: f64) -> Result<usize> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!(
                "series time must be positive and finite, got {t}"
            )));
        }
        let a = Self::decay_rate(params, t);
        let ln_tol = self.abs_tol.ln();
        if Self::ln_relative_tail(a, self.max_terms) > ln_tol {
            return Err(Error::Regime {
                t,
                t_min: self.min_certified_time(params),
                max_terms: self.max_terms,
            });
        }
        let (mut lo, mut hi) = (1usize, self.max_terms);
        if Self::ln_relative_tail(a, lo) <= ln_tol {
            return Ok(1);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if Self::ln_relative_tail(a, mid) <= ln_tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Smallest time at which `max_terms` terms are certified.
    pub fn min_certified_time(&self, params: &ModelParams) -> f64 {
        let ln_tol = self.abs_tol.ln();
        let ok = |t: f64| Self::ln_relative_tail(Self::decay_rate(params, t), self.max_terms) <= ln_tol;
        let (mut lo, mut hi) = (1e-12f64, 1.0f64);
        while !ok(hi) {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-12 {
                break;
            }
        }
        hi
    }

    /// `Σ_{k≤K} e^{a(γ_k−γ₁)} Ai(u+γ_k) Ai(v+γ_k) / Ai'(γ_k)²`.
    fn density_sum(&self, a: f64, k: usize, u: f64, v: f64) -> f64 {
        let g1 = gamma1();
        let zeros = &self.table.zeros()[..k];
        let derivs = &self.table.derivs()[..k];
        zeros
            .iter()
            .zip(derivs)
            .map(|(&g, &d)| (a * (g - g1)).exp() * ai(u + g) * ai(v + g) / (d * d))
            .sum()
    }

    /// `Σ_{k≤K} e^{a(γ_k−γ₁)} Ai(u+γ_k) / Ai'(γ_k)`.
    fn flux_sum(&self, a: f64, k: usize, u: f64) -> f64 {
        let g1 = gamma1();
        let zeros = &self.table.zeros()[..k];
        let derivs = &self.table.derivs()[..k];
        zeros
            .iter()
            .zip(derivs)
            .map(|(&g, &d)| (a * (g - g1)).exp() * ai(u + g) / d)
            .sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `exp(ln_scale) * s`, combined in log space.
fn scaled(ln_scale: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    s.signum() * (ln_scale + s.abs().ln()).exp()
}

/// Log of the free density.
pub fn ln_free_density(params: &ModelParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let (rho, beta) = (params.rho, params.beta);
    let d = y - x;
    Ok(
        -0.5 * (2.0 * PI * t).ln() + rho * x - rho * y - d * d / (2.0 * t) - rho * rho * t / 2.0
            + beta * (y + x) * t / 2.0
            + beta * beta * t * t * t / 24.0,
    )
}

/// Expected density at `y` at time `t` of particles descended from one
/// particle at `x`, with no barrier.
pub fn free_density(params: &ModelParams, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(ln_free_density(params, t, x, y)?.exp())
}

/// `exp(βxt + β²t³/6 − βρt²/2)`, the expected population at time `t` from
/// one particle at `x`.
pub fn free_mass(params: &ModelParams, t: f64, x: f64) -> f64 {
    let (rho, beta) = (params.rho, params.beta);
    (beta * x * t + beta * beta * t * t * t / 6.0 - beta * rho * t * t / 2.0).exp()
}

/// Density of Brownian motion killed at 0 and at rate `βx` on `(0, ∞)`.
pub fn killed_bm_density(params: &ModelParams, t: f64, x: f64, y: f64, series: &SpectralSeries) -> Result<f64> {
    check_time(t)?;
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::Domain(format!(
            "killed BM density needs x, y > 0, got ({x}, {y})"
        )));
    }
    let k = series.terms_for(params, t)?;
    let c = params.airy_scale();
    let a = SpectralSeries::decay_rate(params, t);
    let s = series.density_sum(a, k, c * x, c * y);
    Ok(scaled(c.ln() + a * gamma1(), s).max(0.0))
}

fn check_below(level: f64, x: f64, y: f64) -> Result<()> {
    if !(x < level && y <= level) {
        return Err(Error::Domain(format!(
            "killed density needs x < {level} and y <= {level}, got ({x}, {y})"
        )));
    }
    Ok(())
}

/// Series value together with a bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certified {
    pub value: f64,
    pub error_bound: f64,
}

/// Killed density at `level` with its truncation error bound.
pub fn killed_density_certified(
    params: &ModelParams,
    level: f64,
    t: f64,
    x: f64,
    y: f64,
    series: &SpectralSeries,
) -> Result<Certified> {
    check_time(t)?;
    check_below(level, x, y)?;
    let k = series.terms_for(params, t)?;
    let (rho, beta) = (params.rho, params.beta);
    let c = params.airy_scale();
    let a = SpectralSeries::decay_rate(params, t);
    let s = series.density_sum(a, k, c * (level - x), c * (level - y));
    let ln_scale = c.ln() + (beta * level - rho * rho / 2.0) * t + a * gamma1() + rho * (x - y);
    Ok(Certified {
        value: scaled(ln_scale, s).max(0.0),
        error_bound: (ln_scale + series.tail_bound(params, t, k).ln()).exp(),
    })
}

/// Expected density of the process killed on reaching `level`.
pub fn killed_density_at_level(
    params: &ModelParams,
    level: f64,
    t: f64,
    x: f64,
    y: f64,
    series: &SpectralSeries,
) -> Result<f64> {
    Ok(killed_density_certified(params, level, t, x, y, series)?.value)
}

/// Expected density of the process killed on reaching `L_A`.
pub fn killed_density(params: &ModelParams, a: f64, t: f64, x: f64, y: f64, series: &SpectralSeries) -> Result<f64> {
    killed_density_at_level(params, level(params, a), t, x, y, series)
}

/// Rate at time `t` at which descendants of a particle at `x` hit `L_A`:
/// `−½ ∂_y p_t^{L_A}(x, y)` at `y = L_A`, summed term by term.
pub fn hit_rate(params: &ModelParams, a: f64, t: f64, x: f64, series: &SpectralSeries) -> Result<f64> {
    check_time(t)?;
    let l = level(params, a);
    if !(x < l) {
        return Err(Error::Domain(format!("hit rate needs x < {l}, got {x}")));
    }
    let k = series.terms_for(params, t)?;
    let (rho, beta) = (params.rho, params.beta);
    let c = params.airy_scale();
    let ad = SpectralSeries::decay_rate(params, t);
    let s = series.flux_sum(ad, k, c * (l - x));
    let ln_scale = (0.5 * c * c).ln() + (beta * l - rho * rho / 2.0) * t + ad * gamma1() + rho * (x - l);
    Ok(scaled(ln_scale, s).max(0.0))
}

/// Expected number of hits of `L_A` during `[u, v]`.
pub fn expected_hits(params: &ModelParams, a: f64, u: f64, v: f64, x: f64, series: &SpectralSeries) -> Result<f64> {
    if !(u >= 0.0 && v >= u && v.is_finite()) {
        return Err(Error::Domain(format!(
            "expected hits needs 0 <= u <= v, got [{u}, {v}]"
        )));
    }
    if u == v {
        return Ok(0.0);
    }
    let t_min = series.min_certified_time(params);
    if u < t_min {
        return Err(Error::Regime {
            t: u,
            t_min,
            max_terms: series.max_terms(),
        });
    }
    let mut err = None;
    let q = integrate(
        |t| match hit_rate(params, a, t, x, series) {
            Ok(r) => r,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        u,
        v,
        QuadOptions::tol(0.0, 1e-11),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(q.value),
    }
}

fn bound_exponent(params: &ModelParams, level: f64, t: f64, x: f64, y: f64) -> f64 {
    let rho = params.rho;
    let d = y - x;
    rho * x - rho * y - d * d / (2.0 * t) - rho * rho * t / 2.0 + params.beta * level * t
}

/// Upper bound on the killed density from capping the branching rate at
/// its value on the barrier: `(2πt)^{-1/2} exp(ρx−ρy−(y−x)²/2t−ρ²t/2+βℓt)`.
pub fn small_time_bound(params: &ModelParams, a: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let l = level(params, a);
    check_below(l, x, y)?;
    Ok((bound_exponent(params, l, t, x, y) - 0.5 * (2.0 * PI * t).ln()).exp())
}

/// Reflection-principle bound:
/// `(√2/√π)(ℓ−x)(ℓ−y)t^{-3/2} exp(ρx−ρy−(y−x)²/2t−ρ²t/2+βℓt)`.
pub fn reflection_bound(params: &ModelParams, a: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let l = level(params, a);
    check_below(l, x, y)?;
    let pref = (2.0 / PI).sqrt() * (l - x) * (l - y) / t.powf(1.5);
    Ok(pref * bound_exponent(params, l, t, x, y).exp())
}

/// Leading-order Gaussian approximation of the free density near
/// `x ≈ ρ²/2β`, `t ≈ ρ/β`: with `s = ρ/β − t`, `w = ρ²/2β − x`,
/// `√(β/2πρ) exp(ρx − ρ³/3β − βy²/2ρ − β²s³/6 + βws)`.
pub fn bulk_gaussian_approx(params: &ModelParams, t: f64, x: f64, y: f64) -> f64 {
    let (rho, beta) = (params.rho, params.beta);
    let s = rho / beta - t;
    let w = params.balance_point() - x;
    let e = rho * x - rho.powi(3) / (3.0 * beta) - beta * y * y / (2.0 * rho) - beta * beta * s.powi(3) / 6.0
        + beta * w * s;
    (beta / (2.0 * PI * rho)).sqrt() * e.exp()
}

/// Sizes of the terms dropped by [`bulk_gaussian_approx`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BulkDiagnostics {
    /// `s²β²|y|/ρ`
    pub drift_curvature: f64,
    /// `sβ²y²/ρ²`
    pub variance_drift: f64,
    /// `β|wy|/ρ`
    pub start_offset: f64,
    /// `ln(free_density / approximation)`, the total remainder.
    pub log_residual: f64,
}

pub fn bulk_gaussian_diagnostics(params: &ModelParams, t: f64, x: f64, y: f64) -> Result<BulkDiagnostics> {
    let (rho, beta) = (params.rho, params.beta);
    let s = rho / beta - t;
    let w = params.balance_point() - x;
    let exact = ln_free_density(params, t, x, y)?;
    Ok(BulkDiagnostics {
        drift_curvature: s * s * beta * beta * y.abs() / rho,
        variance_drift: s.abs() * beta * beta * y * y / (rho * rho),
        start_offset: beta * (w * y).abs() / rho,
        log_residual: exact - bulk_gaussian_approx(params, t, x, y).ln(),
    })
}

/// Writes `(y, value)` rows with a header, floats in shortest round-trip form.
pub fn write_curve_csv<W: Write>(mut out: W, header: (&str, &str), points: &[(f64, f64)]) -> io::Result<()> {
    writeln!(out, "{},{}", header.0, header.1)?;
    for &(y, v) in points {
        writeln!(out, "{},{}", Num(y), Num(v))?;
    }
    Ok(())
}

/// Samples `f` on `n` evenly spaced points of `[lo, hi]`.
pub fn sample_curve(lo: f64, hi: f64, n: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Vec<(f64, f64)>> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            Ok((y, f(y)?))
        })
        .collect()
}
