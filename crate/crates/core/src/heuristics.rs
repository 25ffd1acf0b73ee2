//! Large-deviation heuristic for the particle profile and the
//! correspondence with a discrete population model of size `N`, mutation
//! rate `μ`, and selective advantage `s`.

use std::io::{self, Write};

use serde::Serialize;

use crate::airy::gamma1;
use crate::error::{Error, Result};
use crate::fmt::Num;
use crate::model::ModelParams;

/// The optimal path `f_z` from `ρ²/2β` at time 0 to `z` at time `T`.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryCurve {
    pub horizon: f64,
    pub z: f64,
    pub t_z: f64,
    /// False when `t_z < 0`: the path would have to leave before time 0.
    pub in_regime: bool,
    pub samples: Vec<(f64, f64)>,
    top: f64,
    beta: f64,
}

impl TrajectoryCurve {
    pub fn value(&self, u: f64) -> f64 {
        if u <= self.t_z {
            self.top
        } else {
            let d = u - self.t_z;
            self.top - 0.5 * self.beta * d * d
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        if u <= self.t_z {
            0.0
        } else {
            -self.beta * (u - self.t_z)
        }
    }
}

fn check_z(params: &ModelParams, z: f64) -> Result<f64> {
    let gap = params.balance_point() - z;
    if !(gap >= 0.0) {
        return Err(Error::Domain(format!(
            "z = {z} lies above rho^2/2beta = {}",
            params.balance_point()
        )));
    }
    Ok(gap)
}

pub const TRAJECTORY_SAMPLES: usize = 201;

pub fn ld_trajectory(params: &ModelParams, horizon: f64, z: f64) -> Result<TrajectoryCurve> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    let gap = check_z(params, z)?;
    let t_z = horizon - (2.0 / params.beta * gap).sqrt();
    let mut curve = TrajectoryCurve {
        horizon,
        z,
        t_z,
        in_regime: t_z >= 0.0,
        samples: Vec::with_capacity(TRAJECTORY_SAMPLES),
        top: params.balance_point(),
        beta: params.beta,
    };
    curve.samples = (0..TRAJECTORY_SAMPLES)
        .map(|i| {
            let u = horizon * i as f64 / (TRAJECTORY_SAMPLES - 1) as f64;
            (u, curve.value(u))
        })
        .collect();
    Ok(curve)
}

/// `g(z) = ρ³/2β − ρz − (2√(2β)/3)(ρ²/2β − z)^{3/2}`.
pub fn ld_exponent(params: &ModelParams, z: f64) -> Result<f64> {
    let gap = check_z(params, z)?;
    let (rho, beta) = (params.rho, params.beta);
    Ok(rho.powi(3) / (2.0 * beta) - rho * z - 2.0 * (2.0 * beta).sqrt() / 3.0 * gap.powf(1.5))
}

/// `ρ³/6β − βz²/2ρ`.
pub fn ld_exponent_gauss(params: &ModelParams, z: f64) -> f64 {
    let (rho, beta) = (params.rho, params.beta);
    rho.powi(3) / (6.0 * beta) - beta * z * z / (2.0 * rho)
}

/// Writes `z,g,gauss` on `n` evenly spaced points of `[lo, hi]`.
pub fn write_exponent_csv<W: Write>(mut out: W, params: &ModelParams, lo: f64, hi: f64, n: usize) -> Result<()> {
    let n = n.max(2);
    let io = |e: io::Error| Error::Numeric(format!("writing curve: {e}"));
    writeln!(out, "z,g,gauss").map_err(io)?;
    for i in 0..n {
        let z = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let g = ld_exponent(params, z)?;
        writeln!(out, "{},{},{}", Num(z), Num(g), Num(ld_exponent_gauss(params, z))).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteMapping {
    pub beta: f64,
    pub rho: f64,
    /// `N³μs²`
    pub selection_index: f64,
    /// Minimizer of the population-size map; the returned `rho` lies above it.
    pub threshold_rho: f64,
    /// Second solution on the decreasing branch, when one exists.
    pub alternative_rho: Option<f64>,
}

/// `ln N = ⅓ln β − 3 ln ρ + ρ³/6β − ρ(2β)^{-1/3}γ₁`.
pub fn ln_population_size(beta: f64, rho: f64) -> f64 {
    beta.ln() / 3.0 - 3.0 * rho.ln() + rho.powi(3) / (6.0 * beta) - rho * gamma1() / (2.0 * beta).cbrt()
}

/// `N³μs²`.
pub fn selection_index(n: f64, mu: f64, s: f64) -> f64 {
    n.powi(3) * mu * s * s
}

const RHO_LO: f64 = 1e-8;
const RHO_HI: f64 = 1e3;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Branching Brownian motion parameters matching a discrete population:
/// `β = s√μ` and `ρ` solving `N = β^{1/3}ρ^{-3} exp(ρ³/6β − ρ(2β)^{-1/3}γ₁)`.
///
/// The right-hand side is convex in `ln`-scale with a single minimum; the
/// root above the minimum is returned and a root below it, if present, is
/// reported in `alternative_rho`.
pub fn discrete_map(n: f64, mu: f64, s: f64) -> Result<DiscreteMapping> {
    if !(n > 1.0 && n.is_finite()) {
        return Err(Error::Domain(format!("population size must exceed 1, got {n}")));
    }
    if !(mu > 0.0 && s > 0.0 && mu.is_finite() && s.is_finite()) {
        return Err(Error::Domain(format!(
            "mu and s must be positive, got mu = {mu}, s = {s}"
        )));
    }
    let beta = s * mu.sqrt();
    let target = n.ln();
    let resid = |rho: f64| ln_population_size(beta, rho) - target;
    // d/dρ ln N = −3/ρ + ρ²/2β + |γ₁|(2β)^{-1/3} is increasing in ρ.
    let slope = |rho: f64| -3.0 / rho + rho * rho / (2.0 * beta) - gamma1() / (2.0 * beta).cbrt();
    let threshold = if slope(RHO_HI) <= 0.0 {
        RHO_HI
    } else {
        bisect(RHO_LO, RHO_HI, slope)
    };
    let diag = || {
        format!(
            "no bracket for rho in ({RHO_LO}, {RHO_HI}): beta = {beta}, ln N = {target}, \
             min ln N(rho) = {} at rho = {threshold}",
            ln_population_size(beta, threshold)
        )
    };
    if resid(threshold) > 0.0 || resid(RHO_HI) < 0.0 {
        return Err(Error::Numeric(diag()));
    }
    let rho = bisect(threshold, RHO_HI, resid);
    let alternative_rho = (resid(RHO_LO) > 0.0).then(|| bisect(RHO_LO, threshold, resid));
    Ok(DiscreteMapping {
        beta,
        rho,
        selection_index: selection_index(n, mu, s),
        threshold_rho: threshold,
        alternative_rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pstar() -> ModelParams {
        ModelParams::new(0.5, 0.01, 0.5).unwrap()
    }

    #[test]
    fn exponent_at_zero() {
        let p = pstar();
        let g0 = ld_exponent(&p, 0.0).unwrap();
        assert!((g0 - 12.5 / 6.0).abs() <= 4.0 * f64::EPSILON * g0);
        assert!((g0 - ld_exponent_gauss(&p, 0.0)).abs() <= 4.0 * f64::EPSILON * g0);
        assert!(ld_exponent(&p, 13.0).is_err());
    }

    #[test]
    fn trajectory_shapes() {
        let p = pstar();
        let top = ld_trajectory(&p, 80.0, p.balance_point()).unwrap();
        assert_eq!(top.t_z, 80.0);
        assert!(top.samples.iter().all(|&(_, f)| f == p.balance_point()));
        let c = ld_trajectory(&p, 80.0, 0.0).unwrap();
        assert!((80.0 - c.t_z - 50.0).abs() < 1e-12);
        assert!((c.value(80.0)).abs() < 1e-10);
        assert_eq!(c.derivative(c.t_z), 0.0);
        assert!(!ld_trajectory(&p, 10.0, 0.0).unwrap().in_regime);
    }

    #[test]
    fn gauss_form_is_even_and_close() {
        let p = pstar();
        let g0 = ld_exponent(&p, 0.0).unwrap();
        for i in -10..=10 {
            let z = i as f64 * 0.5;
            assert_eq!(ld_exponent_gauss(&p, z), ld_exponent_gauss(&p, -z));
            assert!((ld_exponent(&p, z).unwrap() - ld_exponent_gauss(&p, z)).abs() <= 0.05 * g0);
        }
    }

    #[test]
    fn discrete_map_arithmetic() {
        assert!((selection_index(1e3, 1e-4, 1e-2) - 10.0).abs() < 1e-9);
        let m = discrete_map(1e6, 1e-4, 1e-2).unwrap();
        assert!((m.beta - 1e-4).abs() < 1e-18);
        // ln N(ρ) never drops to ln 1000 when β = 1e-4.
        match discrete_map(1e3, 1e-4, 1e-2) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("no bracket")),
            other => panic!("expected a bracketing failure, got {other:?}"),
        }
    }

    #[test]
    fn discrete_map_round_trip() {
        let n = ln_population_size(0.01, 0.5).exp();
        assert!((n - 1027.1557153672293).abs() < 1e-8);
        let m = discrete_map(n, 1e-4, 1.0).unwrap();
        assert!((m.rho - 0.5).abs() < 1e-10);
        assert!(m.threshold_rho < 0.5);
    }

    #[test]
    fn discrete_map_reports_second_root() {
        let m = discrete_map(1027.1557153672293, 1e-4, 1.0).unwrap();
        let alt = m.alternative_rho.expect("decreasing branch crosses as well");
        assert!(alt < m.threshold_rho);
        assert!((ln_population_size(0.01, alt) - 1027.1557153672293f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn discrete_map_rejects_bad_input() {
        assert!(discrete_map(1.0, 1e-4, 1e-2).is_err());
        assert!(discrete_map(10.0, 0.0, 1e-2).is_err());
    }

    #[test]
    fn exponent_csv_header() {
        let p = pstar();
        let mut buf = Vec::new();
        write_exponent_csv(&mut buf, &p, -5.0, 5.0, 3).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("z,g,gauss\n-5,"));
        assert_eq!(s.lines().count(), 4);
    }
}
