//! One function per experiment. Each returns its metrics and files; the
//! caller owns all writing.

use std::io::Write;

use bbmwave_core::airy::{ai, ai_prime, airy_orth, airy_zero_table, gamma1, laplace_growth, EdgeLaw};
use bbmwave_core::densities::{expected_hits, free_density, free_mass, hit_rate, killed_density, SpectralSeries};
use bbmwave_core::engine::{
    edge_cloud_advisory, run_replicas, survival_bound, survival_horizon, survival_probe, Ensemble, EnsembleConfig,
    InitSpec, PopulationState,
};
use bbmwave_core::fmt::Num;
use bbmwave_core::heuristics::{discrete_map, ld_exponent, ld_exponent_gauss, ld_trajectory, write_exponent_csv};
use bbmwave_core::model::{assumption_report, level, z_weight, ModelParams};
use bbmwave_core::quad::{integrate, integrate_pieces, QuadOptions};
use bbmwave_core::stats::{
    bulk_measure, distance, edge_measure, martingale_test, mean_estimate, predicted_population, summary,
    write_cdf_grid_csv, EmpiricalMeasure, Metric, Reference,
};
use bbmwave_core::{Error, Result};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{Metrics, Outcome};

pub fn run_experiment(experiment: Experiment, config: &ExperimentConfig) -> Result<Outcome> {
    config.validate(experiment)?;
    match experiment {
        Experiment::Simulate => simulate(config),
        Experiment::VerifyAiry => verify_airy(config),
        Experiment::VerifyDensity => verify_density(config),
        Experiment::Martingale => martingale(config),
        Experiment::BulkGauss => bulk_gauss(config),
        Experiment::EdgeProfile => edge_profile(config),
        Experiment::Survival => survival(config),
        Experiment::Hits => hits(config),
        Experiment::HeuristicCurve => heuristic_curve(config),
        Experiment::Calibrate => calibrate(config),
    }
}

fn csv_error(e: std::io::Error) -> Error {
    Error::Numeric(format!("formatting csv: {e}"))
}

fn series(config: &ExperimentConfig) -> Result<SpectralSeries> {
    SpectralSeries::new(config.series.max_terms, config.series.abs_tol)
}

fn ensemble_config(config: &ExperimentConfig, snapshots: Vec<f64>, keep_states: bool) -> EnsembleConfig {
    let mut e = EnsembleConfig::new(config.params.clone(), config.init, config.horizon);
    e.barrier = config.barrier;
    e.snapshot_times = snapshots;
    e.replicas = config.replicas;
    e.step = config.step;
    e.offsets = config.offsets.clone();
    e.keep_states = keep_states;
    e
}

fn init_warnings(config: &ExperimentConfig, metrics: &mut Metrics) -> Result<()> {
    if let InitSpec::EdgeCloud { u } = config.init {
        if let Some(w) = edge_cloud_advisory(&config.params, u) {
            metrics.warn(w);
        }
    }
    let state = config.init.build(&config.params, config.step.particle_budget)?;
    for w in assumption_report(&config.params, &state).warnings {
        metrics.warn(w);
    }
    Ok(())
}

fn simulate(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    init_warnings(config, &mut out.metrics)?;
    let ens = run_replicas(
        &ensemble_config(config, config.snapshots(), config.keep_states),
        config.seed,
    )?;

    let mut csv = Vec::new();
    write!(csv, "replica,time,n,y").map_err(csv_error)?;
    for a in &config.offsets {
        write!(csv, ",z_{}", Num(*a)).map_err(csv_error)?;
    }
    writeln!(csv, ",min_position,max_position").map_err(csv_error)?;
    for r in &ens.replicas {
        for s in &r.snapshots {
            write!(csv, "{},{},{},{}", r.replica, Num(s.time), s.n, Num(s.y)).map_err(csv_error)?;
            for z in &s.z {
                write!(csv, ",{}", Num(z.value)).map_err(csv_error)?;
            }
            let opt = |v: Option<f64>| v.map(|v| Num(v).to_string()).unwrap_or_default();
            writeln!(csv, ",{},{}", opt(s.min_position), opt(s.max_position)).map_err(csv_error)?;
        }
    }
    out.file("summaries.csv", csv);
    if config.keep_states {
        let mut csv = Vec::new();
        ens.write_snapshot_csv(&mut csv).map_err(csv_error)?;
        out.file("snapshots.csv", csv);
    }
    let digests = serde_json::to_vec_pretty(&ens.digests(20)).map_err(|e| Error::Numeric(e.to_string()))?;
    out.file("events.json", digests);

    let m = &mut out.metrics;
    for (i, &t) in ens.config.snapshot_times.iter().enumerate() {
        let n = mean_estimate(&ens.column(i, |s| s.n as f64));
        m.set_with_se(format!("n_mean@{}", Num(t)), n.mean, n.se);
        let y = mean_estimate(&ens.column(i, |s| s.y));
        m.set_with_se(format!("y_mean@{}", Num(t)), y.mean, y.se);
        for &a in &config.offsets {
            let z = mean_estimate(&ens.column(i, |s| s.z_for(a).unwrap_or(0.0)));
            m.set_with_se(format!("z_{}_mean@{}", Num(a), Num(t)), z.mean, z.se);
        }
    }
    let per = |f: &dyn Fn(&bbmwave_core::engine::ReplicaResult) -> f64| {
        mean_estimate(&ens.replicas.iter().map(f).collect::<Vec<_>>())
    };
    let births = per(&|r| r.log.births as f64);
    m.set_with_se("births_mean", births.mean, births.se);
    let deaths = per(&|r| r.log.deaths as f64);
    m.set_with_se("deaths_mean", deaths.mean, deaths.se);
    let abs = per(&|r| r.log.absorptions.len() as f64);
    m.set_with_se("absorptions_mean", abs.mean, abs.se);
    let top = ens
        .replicas
        .iter()
        .map(|r| r.log.max_position_seen)
        .fold(f64::NEG_INFINITY, f64::max);
    m.set("max_position_seen", top);
    Ok(out)
}

fn verify_airy(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let table = airy_zero_table(config.airy.zeros.max(config.airy.orth).max(1))?;
    let mut csv = b"k,zero,ai_prime_at_zero\n".to_vec();
    for k in 1..=config.airy.zeros {
        writeln!(csv, "{k},{},{}", Num(table.zero(k)), Num(table.deriv(k))).map_err(csv_error)?;
    }
    out.file("airy_zeros.csv", csv);

    let mut csv = b"x,ai,ai_prime\n".to_vec();
    for i in 0..=500 {
        let x = -15.0 + 0.05 * i as f64;
        writeln!(csv, "{},{},{}", Num(x), Num(ai(x)), Num(ai_prime(x))).map_err(csv_error)?;
    }
    out.file("airy_curve.csv", csv);

    let m = &mut out.metrics;
    m.set("gamma1", gamma1());
    m.set("ai_prime_gamma1_sq", table.deriv(1).powi(2));
    let h = 1e-2;
    let mut residual = 0.0f64;
    for i in 0..=2000 {
        let x = -15.0 + 0.0125 * i as f64;
        let second =
            (-ai(x + 2.0 * h) + 16.0 * ai(x + h) - 30.0 * ai(x) + 16.0 * ai(x - h) - ai(x - 2.0 * h)) / (12.0 * h * h);
        residual = residual.max((second - x * ai(x)).abs());
    }
    m.set("ode_residual_max", residual);
    let (mut diag, mut off) = (0.0f64, 0.0f64);
    for j in 1..=config.airy.orth {
        for k in j..=config.airy.orth {
            let v = airy_orth(j, k)?;
            if j == k {
                diag = diag.max((v - table.deriv(k).powi(2)).abs());
            } else {
                off = off.max(v.abs());
            }
        }
    }
    m.set("orth_diag_max_error", diag);
    m.set("orth_offdiag_max", off);
    m.set("laplace_growth_6", laplace_growth(6.0)?);
    let law = EdgeLaw::get();
    m.set("edge_norm", law.norm());
    m.set("edge_mean", law.mean());
    Ok(out)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Relative error of `∫ p_t^{L_A}(x, y) z_A(y) dy` against `e^{−Aβt/ρ} z_A(x)`.
pub fn martingale_quadrature_error(p: &ModelParams, a: f64, t: f64, x: f64, s: &SpectralSeries) -> Result<f64> {
    let la = level(p, a);
    let scale = z_weight(p, a, x);
    let span = 80.0 / p.airy_scale();
    let breaks: Vec<f64> = (0..=16).map(|i| la - span + span * i as f64 / 16.0).collect();
    let mut err = None;
    let q = integrate_pieces(
        |y| match killed_density(p, a, t, x, y, s) {
            Ok(v) => v * z_weight(p, a, y),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        &breaks,
        QuadOptions::tol(1e-12 * scale, 1e-11),
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(rel(q.value, (-a * p.beta * t / p.rho).exp() * scale))
}

/// Largest relative Chapman–Kolmogorov defect of the free density over
/// a fixed design of `(x, y, t, s)`.
pub fn chapman_kolmogorov_error(p: &ModelParams) -> Result<f64> {
    let design = [
        (0.0, 1.0, 4.0, 1.5),
        (0.0, -2.0, 4.0, 2.0),
        (5.0, 3.0, 10.0, 3.0),
        (-3.0, 0.0, 2.0, 0.5),
        (10.0, 12.0, 8.0, 5.0),
    ];
    let mut worst = 0.0f64;
    for (x, y, t, s) in design {
        let direct = free_density(p, t, x, y)?;
        let mid = 0.5 * (x + y);
        let q = integrate(
            |z| free_density(p, s, x, z).unwrap_or(f64::NAN) * free_density(p, t - s, z, y).unwrap_or(f64::NAN),
            mid - 60.0,
            mid + 60.0,
            QuadOptions::tol(0.0, 1e-12),
        )?;
        worst = worst.max(rel(q.value, direct));
    }
    Ok(worst)
}

/// Largest relative gap between `∫ p_t(x, y) dy` and `free_mass(t, x)`.
pub fn free_mass_error(p: &ModelParams) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, x) in [(5.0, 0.0), (10.0, 0.0), (20.0, 12.0), (50.0, -5.0)] {
        let center = x + t * (p.beta * t / 2.0 - p.rho);
        let w = 40.0 * f64::sqrt(t);
        let q = integrate(
            |y| free_density(p, t, x, y).unwrap_or(f64::NAN),
            center - w,
            center + w,
            QuadOptions::tol(0.0, 1e-12),
        )?;
        worst = worst.max(rel(q.value, free_mass(p, t, x)));
    }
    Ok(worst)
}

/// Relative gap between the hit-rate series and half the inward slope of
/// the killed density at the barrier, by Richardson extrapolation.
pub fn hit_rate_fd_error(p: &ModelParams, a: f64, t: f64, x: f64, s: &SpectralSeries) -> Result<f64> {
    let la = level(p, a);
    let d = |h: f64| killed_density(p, a, t, x, la - h, s).map(|v| v / h);
    let (h1, h2) = (1e-3, 1e-4);
    let slope = (h1 * d(h2)? - h2 * d(h1)?) / (h1 - h2);
    Ok(rel(hit_rate(p, a, t, x, s)?, 0.5 * slope))
}

fn verify_density(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let p = &config.params;
    let s = series(config)?;
    let t_edge = 2.0 * p.beta.powf(-2.0 / 3.0);
    let t = config.density.t.unwrap_or(t_edge);
    let a = config.density.a;
    let la = level(p, a);
    let x = la - config.density.depth;
    let n = config.density.points.max(2);

    let mut csv = b"y,killed_density,free_density\n".to_vec();
    for i in 0..n {
        let y = la - 30.0 + 30.0 * i as f64 / (n - 1) as f64;
        let k = if y < la {
            killed_density(p, a, t, x, y, &s)?
        } else {
            0.0
        };
        writeln!(csv, "{},{},{}", Num(y), Num(k), Num(free_density(p, t, x, y)?)).map_err(csv_error)?;
    }
    out.file("killed_density.csv", csv);
    let mut csv = b"x,hit_rate\n".to_vec();
    for i in 1..n {
        let x = la - 30.0 + 30.0 * i as f64 / (n - 1) as f64;
        let r = if x < la { hit_rate(p, a, t, x, &s)? } else { 0.0 };
        writeln!(csv, "{},{}", Num(x), Num(r)).map_err(csv_error)?;
    }
    out.file("hit_rate.csv", csv);

    let m = &mut out.metrics;
    m.set("t", t);
    m.set("min_certified_time", s.min_certified_time(p));
    m.set("terms_at_t", s.terms_for(p, t)? as f64);
    m.set("free_mass_rel_error", free_mass_error(p)?);
    m.set("chapman_kolmogorov_rel_error", chapman_kolmogorov_error(p)?);
    let mut worst = 0.0f64;
    for a in [0.0, 1.0] {
        for t in [t_edge, 10.0] {
            for depth in [1.0, 4.0] {
                worst = worst.max(martingale_quadrature_error(p, a, t, level(p, a) - depth, &s)?);
            }
        }
    }
    m.set("martingale_quadrature_rel_error", worst);
    m.set("hit_rate_fd_rel_error", hit_rate_fd_error(p, a, t, x, &s)?);
    Ok(out)
}

fn martingale(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    init_warnings(config, &mut out.metrics)?;
    let a = config.barrier.offset().unwrap_or(0.0);
    let InitSpec::Point { x: x0 } = config.init else {
        return Err(Error::Config("martingale needs a point start".into()));
    };
    let mut ec = ensemble_config(config, config.snapshots(), false);
    if !ec.offsets.contains(&a) {
        ec.offsets.push(a);
    }
    let ens = run_replicas(&ec, config.seed)?;
    let report = martingale_test(&ens, &config.params, a, x0, &ec.snapshot_times)?;
    let mut csv = b"time,mean,se,target,z_score,variance\n".to_vec();
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            Num(r.time),
            Num(r.mean),
            Num(r.se),
            Num(r.target),
            Num(r.z_score),
            Num(r.variance)
        )
        .map_err(csv_error)?;
    }
    out.file("martingale.csv", csv);
    let m = &mut out.metrics;
    m.set("z0", z_weight(&config.params, a, x0));
    m.set("max_abs_z_score", report.max_abs_z());
    for r in &report.rows {
        m.set_with_se(format!("z_mean@{}", Num(r.time)), r.mean, r.se);
        m.set(format!("z_score@{}", Num(r.time)), r.z_score);
        m.set(format!("target@{}", Num(r.time)), r.target);
    }
    Ok(out)
}

fn hits(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    init_warnings(config, &mut out.metrics)?;
    let p = &config.params;
    let s = series(config)?;
    let a = config.barrier.offset().unwrap_or(0.0);
    let InitSpec::Point { x: x0 } = config.init else {
        return Err(Error::Config("hits needs a point start".into()));
    };
    let h = &config.hits;
    let ens = run_replicas(&ensemble_config(config, vec![config.horizon], false), config.seed)?;

    let count = |u: f64, v: f64| {
        let c: Vec<f64> = ens
            .replicas
            .iter()
            .map(|r| r.log.absorbed_between(u, v) as f64)
            .collect();
        mean_estimate(&c)
    };
    let mut csv = b"bin_start,bin_end,mc_mean,mc_se,expected\n".to_vec();
    for i in 0..h.bins {
        let u = h.u + (h.v - h.u) * i as f64 / h.bins as f64;
        let v = h.u + (h.v - h.u) * (i + 1) as f64 / h.bins as f64;
        let est = count(u, v);
        let want = expected_hits(p, a, u, v, x0, &s)?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            Num(u),
            Num(v),
            Num(est.mean),
            Num(est.se),
            Num(want)
        )
        .map_err(csv_error)?;
    }
    out.file("hits.csv", csv);

    let total = count(h.u, h.v);
    let want = expected_hits(p, a, h.u, h.v, x0, &s)?;
    let m = &mut out.metrics;
    m.set_with_se("absorbed_mean", total.mean, total.se);
    m.set("expected_hits", want);
    m.set("z_score", (total.mean - want) / total.se);
    let mut fd = 0.0f64;
    for t in [0.5 * (h.u + h.v), h.v] {
        fd = fd.max(hit_rate_fd_error(p, a, t, x0, &s)?);
    }
    m.set("hit_rate_fd_rel_error", fd);
    Ok(out)
}

fn final_states(ens: &Ensemble) -> impl Iterator<Item = &PopulationState> {
    ens.replicas.iter().filter_map(|r| r.states.last())
}

fn measure_metrics(
    out: &mut Outcome,
    measure: &EmpiricalMeasure,
    reference: Reference,
    tag: &str,
    cdf_range: (f64, f64),
    points: usize,
) -> Result<()> {
    let ks = distance(measure, reference, Metric::Ks)?;
    let w1 = distance(measure, reference, Metric::Wasserstein1)?;
    let mut csv = Vec::new();
    write_cdf_grid_csv(&mut csv, measure, reference, cdf_range.0, cdf_range.1, points).map_err(csv_error)?;
    out.file(&format!("{tag}_cdf.csv"), csv);
    let m = &mut out.metrics;
    m.set(format!("ks_to_{}", reference_name(reference)), ks);
    m.set(format!("w1_to_{}", reference_name(reference)), w1);
    m.set("mean", measure.mean());
    m.set("variance", measure.variance());
    Ok(())
}

/// Extinction count and the distances of the mixture over surviving
/// replicas only.
fn survivor_metrics(
    out: &mut Outcome,
    ens: &Ensemble,
    reference: Reference,
    measure: impl Fn(&PopulationState) -> EmpiricalMeasure,
) -> Result<()> {
    let live: Vec<EmpiricalMeasure> = final_states(ens).filter(|s| !s.is_empty()).map(measure).collect();
    let m = &mut out.metrics;
    m.set("extinct_replicas", (ens.replicas.len() - live.len()) as f64);
    if live.is_empty() {
        return Ok(());
    }
    let mix = EmpiricalMeasure::mixture(&live);
    let name = reference_name(reference);
    m.set(
        format!("ks_to_{name}_given_survival"),
        distance(&mix, reference, Metric::Ks)?,
    );
    m.set(
        format!("w1_to_{name}_given_survival"),
        distance(&mix, reference, Metric::Wasserstein1)?,
    );
    m.set("mean_given_survival", mix.mean());
    m.set("variance_given_survival", mix.variance());
    Ok(())
}

fn reference_name(r: Reference) -> &'static str {
    match r {
        Reference::StdNormal => "normal",
        Reference::AiryEdge => "edge_law",
    }
}

fn bulk_gauss(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    init_warnings(config, &mut out.metrics)?;
    let p = &config.params;
    let ens = run_replicas(&ensemble_config(config, vec![config.horizon], true), config.seed)?;
    let parts: Vec<EmpiricalMeasure> = final_states(&ens).map(|s| bulk_measure(s, p)).collect();
    measure_metrics(
        &mut out,
        &EmpiricalMeasure::mixture(&parts),
        Reference::StdNormal,
        "bulk",
        (-5.0, 5.0),
        config.cdf_points,
    )?;
    survivor_metrics(&mut out, &ens, Reference::StdNormal, |s| bulk_measure(s, p))?;

    let start = config.init.build(p, config.step.particle_budget)?;
    let z0 = summary(&start, p, &[0.0]).z_for(0.0).unwrap_or(0.0);
    let predicted = predicted_population(z0, p);
    let ratios: Vec<f64> = final_states(&ens).map(|s| s.len() as f64 / predicted).collect();
    let r = mean_estimate(&ratios);
    let m = &mut out.metrics;
    m.set("z0", z0);
    m.set("predicted_population", predicted);
    m.set_with_se("population_ratio", r.mean, r.se);
    Ok(out)
}

fn edge_profile(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    init_warnings(config, &mut out.metrics)?;
    let p = &config.params;
    let ens = run_replicas(&ensemble_config(config, vec![config.horizon], true), config.seed)?;
    let parts: Vec<EmpiricalMeasure> = final_states(&ens).map(|s| edge_measure(s, p)).collect();
    measure_metrics(
        &mut out,
        &EmpiricalMeasure::mixture(&parts),
        Reference::AiryEdge,
        "edge",
        (-2.0, 12.0),
        config.cdf_points,
    )?;
    survivor_metrics(&mut out, &ens, Reference::AiryEdge, |s| edge_measure(s, p))?;
    let above = final_states(&ens)
        .map(|s| s.positions().filter(|&x| x > p.edge()).count())
        .sum::<usize>();
    out.metrics.set("particles_above_edge", above as f64);
    Ok(out)
}

fn survival(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let p = &config.params;
    let sv = &config.survival;
    let horizon = match sv.horizon {
        Some(h) => h,
        None => survival_horizon(p, sv.x, sv.delta)?,
    };
    let est = survival_probe(p, sv.x, horizon, config.replicas, &config.step, config.seed)?;
    let bound = survival_bound(p, sv.x);
    let mut csv = b"horizon,replicas,survivors,p_hat,ci_lo,ci_hi,bound\n".to_vec();
    writeln!(
        csv,
        "{},{},{},{},{},{},{}",
        Num(horizon),
        est.replicas,
        est.survivors,
        Num(est.p_hat),
        Num(est.ci95.0),
        Num(est.ci95.1),
        Num(bound)
    )
    .map_err(csv_error)?;
    out.file("survival.csv", csv);
    let m = &mut out.metrics;
    let n = est.replicas.max(1) as f64;
    m.set_with_se("p_hat", est.p_hat, (est.p_hat * (1.0 - est.p_hat) / n).sqrt());
    m.set("ci95_lo", est.ci95.0);
    m.set("ci95_hi", est.ci95.1);
    m.set("bound", bound);
    m.set("horizon", horizon);
    Ok(out)
}

fn heuristic_curve(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let p = &config.params;
    let hc = &config.heuristic;
    let top = p.balance_point();
    let (lo, hi) = (hc.z_lo.unwrap_or(-top), hc.z_hi.unwrap_or(top));
    let mut csv = Vec::new();
    write_exponent_csv(&mut csv, p, lo, hi, hc.points)?;
    out.file("exponent.csv", csv);

    let horizon = hc.trajectory_horizon.unwrap_or(config.horizon);
    let curve = ld_trajectory(p, horizon, hc.trajectory_z)?;
    let mut csv = b"u,f\n".to_vec();
    for &(u, f) in &curve.samples {
        writeln!(csv, "{},{}", Num(u), Num(f)).map_err(csv_error)?;
    }
    out.file("trajectory.csv", csv);

    let m = &mut out.metrics;
    if !curve.in_regime {
        m.warn(format!(
            "trajectory to z = {} needs t_z = {} < 0; horizon {horizon} is too short and the curve is extrapolated",
            hc.trajectory_z, curve.t_z
        ));
    }
    let g = |z: f64| ld_exponent(p, z);
    let h = 1e-3;
    m.set("g0", g(0.0)?);
    m.set("g0_target", p.rho.powi(3) / (6.0 * p.beta));
    m.set("g0_gauss", ld_exponent_gauss(p, 0.0));
    m.set("g_prime_fd", (g(h)? - g(-h)?) / (2.0 * h));
    m.set("g_second_fd", (g(h)? - 2.0 * g(0.0)? + g(-h)?) / (h * h));
    m.set("g_second_target", -p.beta / p.rho);
    m.set("t_z", curve.t_z);
    m.set("in_regime", if curve.in_regime { 1.0 } else { 0.0 });
    if curve.in_regime {
        let lag = |u: f64| {
            let d = curve.derivative(u) + p.rho;
            p.beta * curve.value(u) - 0.5 * d * d
        };
        let action = integrate(lag, curve.t_z, horizon, QuadOptions::tol(1e-13, 1e-13))?.value;
        m.set("action", action);
        m.set("action_error", (action - g(hc.trajectory_z)?).abs());
    }
    Ok(out)
}

fn calibrate(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let c = &config.calibrate;
    let map = discrete_map(c.n, c.mu, c.s)?;
    let m = &mut out.metrics;
    m.set("beta", map.beta);
    m.set("rho", map.rho);
    m.set("threshold_rho", map.threshold_rho);
    m.set("selection_index", map.selection_index);
    m.set("rho3_over_beta", map.rho.powi(3) / map.beta);
    if let Some(alt) = map.alternative_rho {
        m.set("alternative_rho", alt);
        m.warn(format!(
            "a second solution rho = {alt} lies below the threshold {}",
            map.threshold_rho
        ));
    }
    if map.rho.powi(3) / map.beta < bbmwave_core::model::RHO3_OVER_BETA_ADVISORY {
        m.warn("rho^3/beta is small; asymptotic predictions are unreliable");
    }
    let mut params = config.params.clone();
    params.rho = map.rho;
    params.beta = map.beta;
    match params.validate() {
        Ok(()) => {
            let text = toml::to_string(&params).map_err(|e| Error::Numeric(e.to_string()))?;
            out.file("params.toml", format!("[params]\n{text}").into_bytes());
        }
        Err(e) => m.warn(format!("calibrated parameters fail validation: {e}")),
    }
    Ok(out)
}
