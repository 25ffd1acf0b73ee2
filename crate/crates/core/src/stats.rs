//! Population functionals, the empirical bulk and edge measures, distances
//! to the limit laws, and ensemble summaries.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::airy::{ai, ai_prime_gamma1, gamma1, EdgeLaw};
use crate::engine::{Ensemble, InitSpec, PopulationState};
use crate::error::{Error, Result};
use crate::fmt::Num;
use crate::model::{level, z_weight, Barrier, ModelParams};

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `Σ e^{l_i} m_i` for nonnegative `m_i`, with the exponentials shifted by
/// their maximum before summing.
fn weighted_exp_sum(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let shift = terms
        .clone()
        .filter(|&(_, m)| m > 0.0)
        .map(|(l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    for (l, m) in terms {
        if m > 0.0 {
            acc.add((l - shift).exp() * m);
        }
    }
    (shift + acc.value().ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZValue {
    pub a: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySnapshot {
    pub time: f64,
    pub n: u64,
    /// `Σ e^{ρX_i}`
    pub y: f64,
    /// `Z_A` for each requested offset.
    pub z: Vec<ZValue>,
    pub min_position: Option<f64>,
    pub max_position: Option<f64>,
}

impl SummarySnapshot {
    pub fn z_for(&self, a: f64) -> Option<f64> {
        self.z.iter().find(|z| z.a == a).map(|z| z.value)
    }
}

/// `N`, `Y`, `Z_A` for each `A` in `offsets`, and the extreme positions.
pub fn summary(state: &PopulationState, params: &ModelParams, offsets: &[f64]) -> SummarySnapshot {
    let rho = params.rho;
    let c = params.airy_scale();
    let g1 = gamma1();
    let y = weighted_exp_sum(state.positions().map(|x| (rho * x, 1.0)));
    let z = offsets
        .iter()
        .map(|&a| {
            let la = level(params, a);
            let value = weighted_exp_sum(
                state
                    .positions()
                    .map(|x| (rho * x, if x < la { ai(c * (la - x) + g1) } else { 0.0 })),
            );
            ZValue { a, value }
        })
        .collect();
    let (lo, hi) = state
        .positions()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    SummarySnapshot {
        time: state.time,
        n: state.len() as u64,
        y,
        z,
        min_position: (!state.is_empty()).then_some(lo),
        max_position: (!state.is_empty()).then_some(hi),
    }
}

/// `Σ e^{ρX_i} φ(X_i)` over particles strictly below `L_A`.
pub fn weighted_functional(state: &PopulationState, params: &ModelParams, a: f64, phi: impl Fn(f64) -> f64) -> f64 {
    let la = level(params, a);
    let rho = params.rho;
    let mut acc = CompensatedSum::default();
    for x in state.positions().filter(|&x| x < la) {
        acc.add((rho * x).exp() * phi(x));
    }
    acc.value()
}

/// `Z0 e^{−ρ³/3β} / Ai'(γ₁)²`.
pub fn predicted_population(z0: f64, params: &ModelParams) -> f64 {
    let d = ai_prime_gamma1();
    z0 * (-params.rho.powi(3) / (3.0 * params.beta)).exp() / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
    pub total_weight: f64,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<Atom>) -> Self {
        let mut acc = CompensatedSum::default();
        for a in &atoms {
            acc.add(a.weight);
        }
        Self {
            atoms,
            total_weight: acc.value(),
        }
    }

    pub fn dirac(location: f64) -> Self {
        Self::new(vec![Atom { location, weight: 1.0 }])
    }

    /// Unit weights at the given locations.
    pub fn uniform(locations: impl IntoIterator<Item = f64>) -> Self {
        Self::new(
            locations
                .into_iter()
                .map(|location| Atom { location, weight: 1.0 })
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Equal-weight mixture of the normalized inputs. Empty inputs and
    /// measures of zero mass are skipped.
    pub fn mixture(parts: &[EmpiricalMeasure]) -> Self {
        let live: Vec<&EmpiricalMeasure> = parts.iter().filter(|m| m.total_weight > 0.0).collect();
        let share = 1.0 / live.len().max(1) as f64;
        Self::new(
            live.iter()
                .flat_map(|m| {
                    m.atoms.iter().map(move |a| Atom {
                        location: a.location,
                        weight: a.weight / m.total_weight * share,
                    })
                })
                .collect(),
        )
    }

    /// Sorted distinct locations with the cumulative normalized weight
    /// after each.
    pub fn cdf_steps(&self) -> Vec<(f64, f64)> {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        let mut acc = CompensatedSum::default();
        for a in atoms {
            acc.add(a.weight / self.total_weight);
            let c = acc.value().min(1.0);
            match out.last_mut() {
                Some(last) if last.0 == a.location => last.1 = c,
                _ => out.push((a.location, c)),
            }
        }
        if let Some(last) = out.last_mut() {
            last.1 = 1.0;
        }
        out
    }

    pub fn mean(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for a in &self.atoms {
            acc.add(a.weight * a.location);
        }
        acc.value() / self.total_weight
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let mut acc = CompensatedSum::default();
        for a in &self.atoms {
            let d = a.location - m;
            acc.add(a.weight * d * d);
        }
        acc.value() / self.total_weight
    }
}

/// `ζ`: unit atoms at `X_i √(β/ρ)`; `δ₀` for an empty population.
pub fn bulk_measure(state: &PopulationState, params: &ModelParams) -> EmpiricalMeasure {
    if state.is_empty() {
        return EmpiricalMeasure::dirac(0.0);
    }
    let scale = (params.beta / params.rho).sqrt();
    EmpiricalMeasure::uniform(state.positions().map(|x| x * scale))
}

/// `ξ`: weight `e^{ρX_i}` at `(2β)^{1/3}(L − X_i)`, total weight `Y`;
/// `δ₀` for an empty population.
pub fn edge_measure(state: &PopulationState, params: &ModelParams) -> EmpiricalMeasure {
    if state.is_empty() {
        return EmpiricalMeasure::dirac(0.0);
    }
    let c = params.airy_scale();
    let l = params.edge();
    let rho = params.rho;
    EmpiricalMeasure::new(
        state
            .positions()
            .map(|x| Atom {
                location: c * (l - x),
                weight: (rho * x).exp(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    StdNormal,
    AiryEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ks,
    Wasserstein1,
}

pub fn normal_cdf(y: f64) -> f64 {
    0.5 * libm::erfc(-y / SQRT_2)
}

pub fn normal_density(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
}

impl Reference {
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Reference::StdNormal => normal_cdf(y),
            Reference::AiryEdge => EdgeLaw::get().cdf(y),
        }
    }

    /// `∫_{-∞}^y s dF(s)`.
    pub fn partial_mean(&self, y: f64) -> f64 {
        match self {
            Reference::StdNormal => -normal_density(y),
            Reference::AiryEdge => EdgeLaw::get().partial_mean(y),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Reference::StdNormal => 0.0,
            Reference::AiryEdge => EdgeLaw::get().mean(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Reference::StdNormal => {
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                if p >= 1.0 {
                    return f64::INFINITY;
                }
                let (mut lo, mut hi) = (-40.0f64, 40.0f64);
                while hi - lo > 1e-14 * hi.abs().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if mid == lo && mid == hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
            Reference::AiryEdge => EdgeLaw::get().quantile(p),
        }
    }

    /// `∫_{-∞}^y F(s) ds`.
    fn integrated_cdf(&self, y: f64) -> f64 {
        y * self.cdf(y) - self.partial_mean(y)
    }
}

/// Number of reference quantiles added to the atom grid for KS.
pub const KS_QUANTILES: usize = 1000;

fn ecdf_at(steps: &[(f64, f64)], y: f64) -> f64 {
    match steps.partition_point(|s| s.0 <= y) {
        0 => 0.0,
        i => steps[i - 1].1,
    }
}

fn ks(steps: &[(f64, f64)], reference: Reference) -> f64 {
    let mut d = 0.0f64;
    let mut before = 0.0;
    for &(x, after) in steps {
        let f = reference.cdf(x);
        d = d.max((before - f).abs()).max((after - f).abs());
        before = after;
    }
    for &(q, f) in ks_grid(reference) {
        d = d.max((ecdf_at(steps, q) - f).abs());
    }
    d
}

fn ks_grid(reference: Reference) -> &'static [(f64, f64)] {
    static NORMAL: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static EDGE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let cell = match reference {
        Reference::StdNormal => &NORMAL,
        Reference::AiryEdge => &EDGE,
    };
    cell.get_or_init(|| {
        (0..KS_QUANTILES)
            .map(|i| {
                let q = reference.quantile((i as f64 + 0.5) / KS_QUANTILES as f64);
                (q, reference.cdf(q))
            })
            .collect()
    })
}

fn wasserstein1(steps: &[(f64, f64)], reference: Reference) -> f64 {
    let g = |y: f64| reference.integrated_cdf(y);
    let mut acc = CompensatedSum::default();
    let first = steps[0].0;
    acc.add(g(first));
    for w in steps.windows(2) {
        let (a, c) = w[0];
        let b = w[1].0;
        let (fa, fb) = (reference.cdf(a), reference.cdf(b));
        let piece = |lo: f64, hi: f64| (c * (hi - lo) - (g(hi) - g(lo))).abs();
        if fa < c && c < fb {
            let q = reference.quantile(c).clamp(a, b);
            acc.add(piece(a, q));
            acc.add(piece(q, b));
        } else {
            acc.add(piece(a, b));
        }
    }
    let last = steps[steps.len() - 1].0;
    acc.add(reference.mean() - reference.partial_mean(last) - last * (1.0 - reference.cdf(last)));
    acc.value().max(0.0)
}

/// Distance between the normalized measure and a reference law.
pub fn distance(measure: &EmpiricalMeasure, reference: Reference, metric: Metric) -> Result<f64> {
    if measure.is_empty() || !(measure.total_weight > 0.0) {
        return Err(Error::Domain("distance needs a measure with positive mass".into()));
    }
    let steps = measure.cdf_steps();
    Ok(match metric {
        Metric::Ks => ks(&steps, reference),
        Metric::Wasserstein1 => wasserstein1(&steps, reference),
    })
}

/// Writes `location,empirical_cdf,reference_cdf` at each distinct atom.
pub fn write_cdf_csv<W: Write>(mut out: W, measure: &EmpiricalMeasure, reference: Reference) -> io::Result<()> {
    writeln!(out, "location,empirical_cdf,reference_cdf")?;
    for (x, c) in measure.cdf_steps() {
        writeln!(out, "{},{},{}", Num(x), Num(c), Num(reference.cdf(x)))?;
    }
    Ok(())
}

/// Writes `location,empirical_cdf,reference_cdf` on `n` evenly spaced
/// points of `[lo, hi]`.
pub fn write_cdf_grid_csv<W: Write>(
    mut out: W,
    measure: &EmpiricalMeasure,
    reference: Reference,
    lo: f64,
    hi: f64,
    n: usize,
) -> io::Result<()> {
    let n = n.max(2);
    let steps = measure.cdf_steps();
    writeln!(out, "location,empirical_cdf,reference_cdf")?;
    for i in 0..n {
        let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        writeln!(out, "{},{},{}", Num(y), Num(ecdf_at(&steps, y)), Num(reference.cdf(y)))?;
    }
    Ok(())
}

/// Sample mean, standard error of the mean, and sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    pub count: usize,
}

pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            se: f64::NAN,
            variance: f64::NAN,
            count: 0,
        };
    }
    let mut acc = CompensatedSum::default();
    for &v in values {
        acc.add(v);
    }
    let mean = acc.value() / n as f64;
    let mut sq = CompensatedSum::default();
    for &v in values {
        sq.add((v - mean) * (v - mean));
    }
    let variance = if n > 1 { sq.value() / (n - 1) as f64 } else { 0.0 };
    MeanEstimate {
        mean,
        se: (variance / n as f64).sqrt(),
        variance,
        count: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleRow {
    pub time: f64,
    pub mean: f64,
    pub se: f64,
    pub target: f64,
    pub z_score: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub a: f64,
    pub x0: f64,
    pub rows: Vec<MartingaleRow>,
}

impl MartingaleReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max)
    }
}

/// Compares the ensemble mean of `Z_A(t)` with `e^{−Aβt/ρ} z_A(x0)` at
/// each requested snapshot time.
pub fn martingale_test(
    ensemble: &Ensemble,
    params: &ModelParams,
    a: f64,
    x0: f64,
    times: &[f64],
) -> Result<MartingaleReport> {
    let cfg = &ensemble.config;
    if cfg.barrier != (Barrier::Fixed { a }) {
        return Err(Error::Usage(format!(
            "martingale test at A = {a} needs a fixed barrier at L_A, ensemble has {:?}",
            cfg.barrier
        )));
    }
    if cfg.init != (InitSpec::Point { x: x0 }) {
        return Err(Error::Usage(format!(
            "martingale test needs a single particle at {x0}, ensemble has {:?}",
            cfg.init
        )));
    }
    if !cfg.offsets.contains(&a) {
        return Err(Error::Usage(format!("ensemble did not record Z for A = {a}")));
    }
    let z0 = z_weight(params, a, x0);
    let rows = times
        .iter()
        .map(|&t| {
            let i = cfg
                .snapshot_times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
                .ok_or_else(|| Error::Usage(format!("no snapshot at t = {t}")))?;
            let zs = ensemble.column(i, |s| s.z_for(a).unwrap_or(0.0));
            let est = mean_estimate(&zs);
            let target = (-a * params.beta * t / params.rho).exp() * z0;
            Ok(MartingaleRow {
                time: t,
                mean: est.mean,
                se: est.se,
                target,
                z_score: (est.mean - target) / est.se,
                variance: est.variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MartingaleReport { a, x0, rows })
}
