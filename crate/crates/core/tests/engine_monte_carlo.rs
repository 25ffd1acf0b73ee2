use bbmwave_core::densities::{expected_hits, free_density, free_mass, killed_density, SpectralSeries};
use bbmwave_core::engine::{
    evolve, init_point, run_replicas, survival_probe, EnsembleConfig, InitSpec, PopulationState, RngSpec, StepPolicy,
};
use bbmwave_core::model::{Barrier, ModelParams};
use bbmwave_core::quad::{integrate, QuadOptions};
use bbmwave_core::stats::mean_estimate;

fn pstar() -> ModelParams {
    ModelParams::new(0.5, 0.01, 0.5).unwrap()
}

fn terminal_states(
    p: &ModelParams,
    barrier: Barrier,
    x0: f64,
    horizon: f64,
    replicas: u64,
    step: StepPolicy,
    seed: u64,
) -> Vec<PopulationState> {
    (0..replicas)
        .map(|r| {
            let mut rng = RngSpec::new(seed, r).rng();
            evolve(init_point(x0), p, &barrier, horizon, &step, &mut rng).unwrap().0
        })
        .collect()
}

fn bin_counts(states: &[PopulationState], edges: &[f64]) -> Vec<Vec<f64>> {
    let mut per_bin = vec![Vec::with_capacity(states.len()); edges.len() - 1];
    for s in states {
        let mut counts = vec![0.0; edges.len() - 1];
        for x in s.positions() {
            let i = edges.partition_point(|&e| e <= x);
            if i >= 1 && i < edges.len() {
                counts[i - 1] += 1.0;
            }
        }
        for (bin, c) in per_bin.iter_mut().zip(counts) {
            bin.push(c);
        }
    }
    per_bin
}

/// Fraction of bins whose mean count per replica is within three binomial
/// standard errors of `expected`.
fn bins_within_binomial(states: &[PopulationState], edges: &[f64], expected: &[f64]) -> f64 {
    let r = states.len() as f64;
    let ok = bin_counts(states, edges)
        .iter()
        .zip(expected)
        .filter(|(c, &m)| {
            let se = (m * (1.0 - m).max(0.0) / r).sqrt().max(1.0 / r);
            (c.iter().sum::<f64>() / r - m).abs() <= 3.0 * se
        })
        .count();
    ok as f64 / expected.len() as f64
}

/// Same, with the sample standard error of the per-replica bin counts.
fn bins_within_sample(states: &[PopulationState], edges: &[f64], expected: &[f64]) -> f64 {
    let ok = bin_counts(states, edges)
        .iter()
        .zip(expected)
        .filter(|(c, &m)| {
            let est = mean_estimate(c);
            (est.mean - m).abs() <= 3.0 * est.se.max(1.0 / c.len() as f64)
        })
        .count();
    ok as f64 / expected.len() as f64
}

#[test]
fn critical_branching_conserves_mean_and_moves_like_drifted_bm() {
    let p = ModelParams::new(0.5, 0.0, 0.5).unwrap();
    let (t, n) = (5.0, 10_000);
    let states = terminal_states(&p, Barrier::None, 0.0, t, n, StepPolicy::default(), 11);
    let counts: Vec<f64> = states.iter().map(|s| s.len() as f64).collect();
    let est = mean_estimate(&counts);
    assert!((est.mean - 1.0).abs() <= 3.0 * est.se, "{est:?}");
    let sums: Vec<f64> = states.iter().map(|s| s.positions().sum()).collect();
    let first = mean_estimate(&sums);
    assert!((first.mean + p.rho * t).abs() <= 3.0 * first.se, "{first:?}");
    let squares: Vec<f64> = states.iter().map(|s| s.positions().map(|x| x * x).sum()).collect();
    let second = mean_estimate(&squares);
    let want = (p.rho * t).powi(2) + t;
    assert!((second.mean - want).abs() <= 3.0 * second.se, "{second:?} vs {want}");
    // Binary critical branching at rate 1 each way survives to t with
    // probability 1/(1 + t).
    let alive = states.iter().filter(|s| !s.is_empty()).count() as f64 / n as f64;
    let q = 1.0 / (1.0 + t);
    assert!(
        (alive - q).abs() <= 3.0 * (q * (1.0 - q) / n as f64).sqrt(),
        "{alive} vs {q}"
    );
}

#[test]
fn free_population_matches_closed_form() {
    let p = pstar();
    let (t, n) = (5.0, 20_000);
    let states = terminal_states(&p, Barrier::None, 0.0, t, n, StepPolicy::default(), 12);
    let counts: Vec<f64> = states.iter().map(|s| s.len() as f64).collect();
    let est = mean_estimate(&counts);
    let want = free_mass(&p, t, 0.0);
    assert!((est.mean - want).abs() <= 3.0 * est.se, "{est:?} vs {want}");

    let center = -p.rho * t;
    let w = 4.0 * t.sqrt();
    let edges: Vec<f64> = (0..=20).map(|i| center - w + 2.0 * w * i as f64 / 20.0).collect();
    let expected: Vec<f64> = edges
        .windows(2)
        .map(|e| {
            integrate(
                |y| free_density(&p, t, 0.0, y).unwrap(),
                e[0],
                e[1],
                QuadOptions::tol(1e-12, 1e-10),
            )
            .unwrap()
            .value
        })
        .collect();
    let frac = bins_within_binomial(&states, &edges, &expected);
    assert!(frac >= 0.9, "{frac}");
}

#[test]
fn killed_population_matches_spectral_density() {
    let p = pstar();
    let series = SpectralSeries::default();
    let l = p.edge();
    let (x0, t, n) = (l - 1.0, 5.0, 20_000);
    let states = terminal_states(&p, Barrier::Fixed { a: 0.0 }, x0, t, n, StepPolicy::default(), 13);
    assert!(states.iter().flat_map(|s| s.positions()).all(|x| x < l));
    let edges: Vec<f64> = (0..=20).map(|i| l - 10.0 + 0.5 * i as f64).collect();
    let expected: Vec<f64> = edges
        .windows(2)
        .map(|e| {
            integrate(
                |y| killed_density(&p, 0.0, t, x0, y, &series).unwrap(),
                e[0],
                e[1],
                QuadOptions::tol(1e-12, 1e-10),
            )
            .unwrap()
            .value
        })
        .collect();
    let frac = bins_within_sample(&states, &edges, &expected);
    assert!(frac >= 0.9, "{frac}");
}

#[test]
fn halving_the_step_moves_the_mean_by_less_than_one_standard_error() {
    let p = pstar();
    let (t, n) = (5.0, 20_000);
    let mean_n = |dt_max: f64, seed: u64| {
        let step = StepPolicy {
            dt_max,
            ..StepPolicy::default()
        };
        let counts: Vec<f64> = terminal_states(&p, Barrier::None, 0.0, t, n, step, seed)
            .iter()
            .map(|s| s.len() as f64)
            .collect();
        mean_estimate(&counts)
    };
    let (coarse, fine) = (mean_n(0.01, 14), mean_n(0.005, 15));
    let se = (coarse.se.powi(2) + fine.se.powi(2)).sqrt();
    assert!((coarse.mean - fine.mean).abs() < se, "{coarse:?} vs {fine:?}");
}

#[test]
fn survival_is_nonincreasing_in_horizon() {
    let p = pstar();
    let step = StepPolicy::default();
    let at = |h: f64| survival_probe(&p, 10.0, h, 2_000, &step, 16).unwrap();
    let zero = at(0.0);
    assert_eq!(zero.p_hat, 1.0);
    let probes: Vec<_> = [5.0, 20.0, 50.0].iter().map(|&h| at(h)).collect();
    for w in probes.windows(2) {
        assert!(w[1].p_hat <= w[0].ci95.1, "{probes:?}");
    }
}

#[test]
fn ensembles_are_reproducible() {
    let p = pstar();
    let mut cfg = EnsembleConfig::new(p.clone(), InitSpec::Point { x: p.edge() - 2.0 }, 8.0);
    cfg.barrier = Barrier::Fixed { a: 0.0 };
    cfg.snapshot_times = vec![1.0, 4.0, 8.0];
    cfg.replicas = 2;
    cfg.keep_states = true;
    let a = run_replicas(&cfg, 99).unwrap();
    let b = run_replicas(&cfg, 99).unwrap();
    let digest = |e: &bbmwave_core::engine::Ensemble| serde_json::to_string(&e.digests(8)).unwrap();
    assert_eq!(digest(&a), digest(&b));
    let csv = |e: &bbmwave_core::engine::Ensemble| {
        let mut buf = Vec::new();
        e.write_snapshot_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a), csv(&b));
    cfg.replicas = 0;
    assert!(run_replicas(&cfg, 99).unwrap().replicas.is_empty());
}

#[test]
fn expected_hits_example_agrees_with_absorbed_counts() {
    let p = pstar();
    let x = p.edge() - 1.0;
    let mut c = EnsembleConfig::new(p.clone(), InitSpec::Point { x }, 10.0);
    c.barrier = Barrier::Fixed { a: 0.0 };
    c.replicas = 100_000;
    c.step.dt_max = 0.001;
    let ens = run_replicas(&c, 77).unwrap();
    let counts: Vec<f64> = ens
        .replicas
        .iter()
        .map(|r| r.log.absorbed_between(1.0, 10.0) as f64)
        .collect();
    let mc = mean_estimate(&counts);
    let want = expected_hits(&p, 0.0, 1.0, 10.0, x, &SpectralSeries::default()).unwrap();
    assert!(mc.se < 0.015 * want, "{mc:?}");
    assert!(
        (mc.mean - want).abs() <= 0.05 * want,
        "{} ± {} vs {want}",
        mc.mean,
        mc.se
    );
}
