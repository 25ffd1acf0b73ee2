#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

use bbmwave_core::airy::{ai, ai_prime, airy_orth, airy_zero, airy_zero_table, edge_density, laplace_growth, EdgeLaw};
use bbmwave_core::quad::{integrate, QuadOptions};

/// `Ai(x) = (1/π) ∫₀^∞ exp(−r³/3 − xr/2) sin(π/3 − √3xr/2) dr`.
fn contour_ai(x: f64) -> f64 {
    let s3 = 3f64.sqrt();
    let f = |r: f64| (-r * r * r / 3.0 - x * r / 2.0).exp() * (PI / 3.0 - s3 * x * r / 2.0).sin();
    integrate(f, 0.0, 14.0, QuadOptions::tol(1e-12, 1e-13)).unwrap().value / PI
}

/// `Ai'(x) = −(1/π) ∫₀^∞ r exp(−r³/3 − xr/2) sin(2π/3 − √3xr/2) dr`.
fn contour_ai_prime(x: f64) -> f64 {
    let s3 = 3f64.sqrt();
    let f = |r: f64| r * (-r * r * r / 3.0 - x * r / 2.0).exp() * (2.0 * PI / 3.0 - s3 * x * r / 2.0).sin();
    -integrate(f, 0.0, 14.0, QuadOptions::tol(1e-12, 1e-13)).unwrap().value / PI
}

#[test]
fn matches_contour_integral() {
    for &x in &[-10.0, -8.7, -6.0, -3.3, -1.0, -0.25, 0.0, 0.5, 2.0, 4.0, 6.0, 6.5, 8.0] {
        let (a, d) = (ai(x), ai_prime(x));
        assert!((a - contour_ai(x)).abs() < 1e-10, "Ai({x}) = {a} vs {}", contour_ai(x));
        assert!(
            (d - contour_ai_prime(x)).abs() < 1e-10,
            "Ai'({x}) = {d} vs {}",
            contour_ai_prime(x)
        );
    }
}

#[test]
fn satisfies_airy_equation() {
    let h = 1e-2;
    let mut worst = 0.0f64;
    let mut x = -15.0;
    while x <= 10.0 {
        let second =
            (-ai(x + 2.0 * h) + 16.0 * ai(x + h) - 30.0 * ai(x) + 16.0 * ai(x - h) - ai(x - 2.0 * h)) / (12.0 * h * h);
        worst = worst.max((second - x * ai(x)).abs());
        x += 0.0125;
    }
    assert!(worst < 1e-6, "max residual {worst}");
}

#[test]
fn derivative_matches_difference_quotient() {
    let h = 1e-3;
    for i in 0..=50 {
        let x = -15.0 + 0.5 * i as f64;
        let fd = (ai(x - 2.0 * h) - 8.0 * ai(x - h) + 8.0 * ai(x + h) - ai(x + 2.0 * h)) / (12.0 * h);
        assert!((fd - ai_prime(x)).abs() < 1e-8 * (1.0 + x.abs()).powi(2), "x = {x}");
    }
}

#[test]
fn known_zeros() {
    let cases = [
        (1, -2.338107410459767),
        (2, -4.0879494441309706),
        (50, -38.021008677255254),
        (100, -60.455557274116699),
        (200, -96.047337603081254),
    ];
    for (k, want) in cases {
        let got = airy_zero(k).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs(), "zero {k}: {got}");
    }
    let t = airy_zero_table(2).unwrap();
    assert!((t.deriv(1).powi(2) - 0.49169661790062885).abs() < 1e-13);
    assert!((t.deriv(2).powi(2) - 0.64498787206891155).abs() < 1e-13);
    assert!(airy_zero(0).is_err());
}

#[test]
fn zeros_are_ordered_and_derivatives_alternate() {
    let t = airy_zero_table(400).unwrap();
    for k in 1..t.len() {
        assert!(t.zero(k + 1) < t.zero(k));
        assert!(t.deriv(k) * t.deriv(k + 1) < 0.0);
        assert!(t.deriv(k + 1).abs() > t.deriv(k).abs());
    }
}

#[test]
fn shifted_eigenfunctions_are_orthogonal() {
    let t = airy_zero_table(10).unwrap();
    for j in 1..=10 {
        for k in j..=10 {
            let v = airy_orth(j, k).unwrap();
            if j == k {
                assert!((v - t.deriv(k).powi(2)).abs() < 1e-7, "({j},{k}): {v}");
            } else {
                assert!(v.abs() < 1e-7, "({j},{k}): {v}");
            }
        }
    }
}

#[test]
fn laplace_growth_near_one() {
    let v = laplace_growth(6.0).unwrap();
    assert!((v - 1.0).abs() < 0.05, "{v}");
    let big = laplace_growth(12.0).unwrap();
    assert!((big - 1.0).abs() < 0.05, "{big}");
}

#[test]
fn edge_law_is_a_probability_density() {
    let law = EdgeLaw::get();
    assert!((law.norm() - 1.2743520591376754).abs() < 1e-10);
    let mass = integrate(edge_density, 0.0, 40.0, QuadOptions::tol(1e-14, 1e-13))
        .unwrap()
        .value;
    assert!((mass - 1.0).abs() < 1e-9, "{mass}");
    let mut y = -1.0;
    while y < 45.0 {
        assert!(edge_density(y) >= 0.0);
        y += 0.037;
    }
    for p in [0.01, 0.25, 0.5, 0.9, 0.999] {
        assert!((law.cdf(law.quantile(p)) - p).abs() < 1e-10);
    }
    let mean = integrate(|y| y * edge_density(y), 0.0, 40.0, QuadOptions::tol(1e-14, 1e-13))
        .unwrap()
        .value;
    assert!((law.mean() - mean).abs() < 1e-9);
}
