use bbmwave_core::densities::{
    expected_hits, free_density, free_mass, hit_rate, killed_bm_density, killed_density, killed_density_at_level,
    killed_density_certified, reflection_bound, small_time_bound, SpectralSeries,
};
use bbmwave_core::model::{level, z_weight, ModelParams};
use bbmwave_core::quad::{integrate, QuadOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pstar() -> ModelParams {
    ModelParams::new(0.5, 0.01, 0.5).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn free_density_integrates_to_free_mass() {
    let p = pstar();
    for &(t, x) in &[(5.0, 0.0), (10.0, 0.0), (20.0, 12.0), (50.0, -5.0)] {
        let center = x + t * (p.beta * t / 2.0 - p.rho);
        let w = 40.0 * f64::sqrt(t);
        let q = integrate(
            |y| free_density(&p, t, x, y).unwrap(),
            center - w,
            center + w,
            QuadOptions::tol(0.0, 1e-12),
        )
        .unwrap();
        assert!(rel(q.value, free_mass(&p, t, x)) < 1e-8, "t = {t}, x = {x}");
    }
}

#[test]
fn free_density_chapman_kolmogorov() {
    let p = pstar();
    let design = [
        (0.0, 1.0, 4.0, 1.5),
        (0.0, -2.0, 4.0, 2.0),
        (5.0, 3.0, 10.0, 3.0),
        (-3.0, 0.0, 2.0, 0.5),
        (10.0, 12.0, 8.0, 5.0),
    ];
    for (x, y, t, s) in design {
        let direct = free_density(&p, t, x, y).unwrap();
        let mid = 0.5 * (x + y);
        let q = integrate(
            |z| free_density(&p, s, x, z).unwrap() * free_density(&p, t - s, z, y).unwrap(),
            mid - 60.0,
            mid + 60.0,
            QuadOptions::tol(0.0, 1e-12),
        )
        .unwrap();
        assert!(
            rel(q.value, direct) < 1e-6,
            "({x},{y},{t},{s}): {} vs {direct}",
            q.value
        );
    }
}

/// `∫ p_t^{L_A}(x, y) z_A(y) dy` over `y < L_A`.
fn killed_z_integral(p: &ModelParams, a: f64, t: f64, x: f64, series: &SpectralSeries) -> f64 {
    let la = level(p, a);
    let scale = z_weight(p, a, x);
    let span = 80.0 / p.airy_scale();
    let mut breaks: Vec<f64> = (0..=16).map(|i| la - span + span * i as f64 / 16.0).collect();
    breaks.dedup();
    let f = |y: f64| killed_density(p, a, t, x, y, series).unwrap() * z_weight(p, a, y);
    bbmwave_core::quad::integrate_pieces(f, &breaks, QuadOptions::tol(1e-12 * scale, 1e-11))
        .unwrap()
        .value
}

#[test]
fn killed_density_preserves_z_weight() {
    let p = pstar();
    let series = SpectralSeries::default();
    let t_edge = 2.0 * p.beta.powf(-2.0 / 3.0);
    for a in [0.0, 1.0] {
        for t in [t_edge, 10.0] {
            for off in [1.0, 4.0] {
                let x = level(&p, a) - off;
                let lhs = killed_z_integral(&p, a, t, x, &series);
                let rhs = (-a * p.beta * t / p.rho).exp() * z_weight(&p, a, x);
                assert!(rel(lhs, rhs) < 1e-6, "A = {a}, t = {t}, x = {x}: {lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn hit_rate_matches_finite_difference() {
    let p = pstar();
    let series = SpectralSeries::default();
    let l = p.edge();
    let t = 2.0 * p.beta.powf(-2.0 / 3.0);
    for x in [l - 1.0, l - 3.0] {
        let d = |h: f64| killed_density(&p, 0.0, t, x, l - h, &series).unwrap() / h;
        let (h1, h2) = (1e-3, 1e-4);
        let slope = (h1 * d(h2) - h2 * d(h1)) / (h1 - h2);
        let fd = 0.5 * slope;
        let series_rate = hit_rate(&p, 0.0, t, x, &series).unwrap();
        assert!(rel(series_rate, fd) < 1e-4, "x = {x}: {series_rate} vs {fd}");
    }
}

#[test]
fn hit_rate_grows_toward_the_barrier_then_vanishes() {
    let p = pstar();
    let series = SpectralSeries::default();
    let l = p.edge();
    for t in [5.0, 20.0, 43.0] {
        let rate = |x: f64| hit_rate(&p, 0.0, t, x, &series).unwrap();
        let far: Vec<f64> = (0..10).map(|i| rate(l - 8.0 + 0.5 * i as f64)).collect();
        assert!(far.windows(2).all(|w| w[1] > w[0]), "t = {t}: {far:?}");
        // Starting on the barrier, descendants are absorbed immediately.
        let near: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&h| rate(l - h)).collect();
        assert!(near.windows(2).all(|w| w[1] < w[0]), "t = {t}: {near:?}");
        assert!(near[2] < 1e-2 * far[9]);
    }
}

#[test]
fn expected_hits_is_additive() {
    let p = pstar();
    let series = SpectralSeries::default();
    let x = p.edge() - 1.0;
    let a = expected_hits(&p, 0.0, 1.0, 4.0, x, &series).unwrap();
    let b = expected_hits(&p, 0.0, 4.0, 10.0, x, &series).unwrap();
    let ab = expected_hits(&p, 0.0, 1.0, 10.0, x, &series).unwrap();
    assert!(rel(a + b, ab) < 1e-9, "{a} + {b} vs {ab}");
}

#[test]
fn killed_density_below_free_density() {
    let p = pstar();
    let series = SpectralSeries::default();
    let l = p.edge();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let t = rng.random_range(2.0..60.0);
        let x = l - rng.random_range(0.01..30.0);
        let y = l - rng.random_range(0.0..30.0);
        let k = killed_density_certified(&p, l, t, x, y, &series).unwrap();
        let f = free_density(&p, t, x, y).unwrap();
        assert!(k.value - k.error_bound <= f, "t = {t}, x = {x}, y = {y}: {k:?} > {f}");
    }
}

#[test]
fn killed_density_increases_with_level() {
    let p = pstar();
    let series = SpectralSeries::default();
    let (t, x, y) = (15.0, 14.0, 16.0);
    let values: Vec<f64> = (0..10)
        .map(|i| killed_density_at_level(&p, 17.0 + 0.75 * i as f64, t, x, y, &series).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
}

#[test]
fn killed_density_semigroup() {
    let p = pstar();
    let series = SpectralSeries::default();
    let l = p.edge();
    let (x, y, s, t) = (l - 2.0, l - 3.0, 12.0, 30.0);
    let direct = killed_density(&p, 0.0, t, x, y, &series).unwrap();
    let span = 80.0 / p.airy_scale();
    let breaks: Vec<f64> = (0..=16).map(|i| l - span + span * i as f64 / 16.0).collect();
    let q = bbmwave_core::quad::integrate_pieces(
        |z| killed_density(&p, 0.0, s, x, z, &series).unwrap() * killed_density(&p, 0.0, t - s, z, y, &series).unwrap(),
        &breaks,
        QuadOptions::tol(1e-13 * direct, 1e-11),
    )
    .unwrap();
    assert!(rel(q.value, direct) < 1e-7, "{} vs {direct}", q.value);
}

#[test]
fn killed_bm_loses_mass() {
    let p = pstar();
    let series = SpectralSeries::default();
    let q = integrate(
        |y| {
            if y > 0.0 {
                killed_bm_density(&p, 1.0, 1.0, y, &series).unwrap()
            } else {
                0.0
            }
        },
        0.0,
        12.0,
        QuadOptions::tol(1e-10, 1e-8),
    )
    .unwrap();
    // Surviving absorption at 0 alone has probability 1 − 2Φ(−1) ≈ 0.6827.
    assert!(q.value < 0.6827 && q.value > 0.6, "{}", q.value);
}

#[test]
fn explicit_bounds_dominate_at_small_times() {
    let p = pstar();
    let series = SpectralSeries::default();
    let tmin = series.min_certified_time(&p);
    let l = p.edge();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let t = rng.random_range(tmin..8.0);
        let x = l - rng.random_range(0.05..4.0);
        let y = l - rng.random_range(0.05..4.0);
        let k = killed_density(&p, 0.0, t, x, y, &series).unwrap();
        assert!(k <= small_time_bound(&p, 0.0, t, x, y).unwrap() * (1.0 + 1e-9));
        assert!(k <= reflection_bound(&p, 0.0, t, x, y).unwrap() * (1.0 + 1e-9));
    }
}
