//! Monte Carlo and finite-difference oracles for the welfare module.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use transplan::welfare::{
    censored_mean, directional_derivative, robust_welfare_at, tobit_mean_tau, tobit_mean_zero,
    welfare_contrast, ParamVector, WelfareSpec, KINK_TOL,
};

/// Monte Carlo mean of `max(tau, N(m, sigma²))`.
fn mc_censored_mean(m: f64, sigma: f64, tau: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0f64;
    for _ in 0..draws {
        let z: f64 = rng.sample(StandardNormal);
        acc += (m + sigma * z).max(tau);
    }
    acc / draws as f64
}

#[test]
fn zero_index_against_monte_carlo() {
    // m = 0, σ = 10: analytic σ·φ(0) ≈ 3.98942.
    let theta = ParamVector::new(vec![0.0], 0.0, 10.0).unwrap();
    let analytic = tobit_mean_zero(&theta, &[1.0], 0.0);
    let mc = mc_censored_mean(0.0, 10.0, 0.0, 10_000_000, 11);
    assert!((analytic - mc).abs() < 5e-3, "analytic {analytic} vs MC {mc}");
}

#[test]
fn simulation_truth_point_against_monte_carlo() {
    // θ0 with x = (1, 0), t = 1: m = 2.
    let theta = ParamVector::new(vec![-2.0, -3.0], 4.0, 10.0).unwrap();
    let analytic = tobit_mean_zero(&theta, &[1.0, 0.0], 1.0);
    let mc = mc_censored_mean(2.0, 10.0, 0.0, 10_000_000, 12);
    assert!((analytic - mc).abs() < 5e-3, "analytic {analytic} vs MC {mc}");
    assert!((analytic - 5.0689).abs() < 1e-4);
}

#[test]
fn tau_censored_mean_against_monte_carlo() {
    // τ = m reduces to m + σ·φ(0); also cross-check the closed form by MC.
    let theta = ParamVector::new(vec![3.0], 0.0, 2.0).unwrap();
    let analytic = tobit_mean_tau(&theta, &[1.0], 0.0, 3.0);
    let mc = mc_censored_mean(3.0, 2.0, 3.0, 4_000_000, 13);
    assert!((analytic - mc).abs() < 5e-3, "analytic {analytic} vs MC {mc}");
}

#[test]
fn smooth_contrast_against_monte_carlo() {
    let theta = ParamVector::new(vec![-2.0, -3.0], 4.0, 10.0).unwrap();
    let spec = WelfareSpec::new(1.0, 0.8, 0.0).unwrap();
    let x = [1.0, 0.0];
    let contrast = welfare_contrast(&theta, &x, &spec);
    let m0 = theta.linear_index(&x, 0.0);
    let m1 = theta.linear_index(&x, 1.0);
    let mc = mc_censored_mean(m1, 10.0, 0.0, 8_000_000, 14)
        - mc_censored_mean(m0, 10.0, 0.0, 8_000_000, 15);
    assert!((contrast - mc).abs() < 1e-2, "analytic {contrast} vs MC {mc}");
}

fn random_theta(rng: &mut ChaCha8Rng) -> ParamVector {
    ParamVector::new(
        vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        rng.random_range(-3.0..3.0),
        rng.random_range(0.5..6.0),
    )
    .unwrap()
}

fn random_direction(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// θ with the tobit mean pinned exactly at floor + ε for (x, t): the kink.
fn kink_theta(x: &[f64], t: f64, sigma: f64, spec: &WelfareSpec) -> ParamVector {
    // Solve censored_mean(m, σ, τ) = floor + ε for m by bisection, then set
    // β = (m - α t) / x0 with a single active covariate.
    let target = spec.floor_for(t) + spec.eps_robust;
    let (mut lo, mut hi) = (-60.0 * sigma, 60.0 * sigma + target.abs());
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if censored_mean(mid, sigma, spec.tau) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = 0.5 * (lo + hi);
    ParamVector::new(vec![(m - 0.0 * t) / x[0], 0.0], 0.0, sigma).unwrap()
}

#[test]
fn directional_derivative_matches_one_sided_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let step = 1e-5;
    let mut checked_kinks = 0;
    for trial in 0..1000 {
        let force_kink = trial % 5 == 4;
        let lambda = match trial % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let spec = WelfareSpec::new(lambda, rng.random_range(0.3..1.5), 0.0).unwrap();
        let x = [rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)];
        let t = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let theta = if force_kink {
            checked_kinks += 1;
            kink_theta(&x, t, rng.random_range(0.5..4.0), &spec)
        } else {
            random_theta(&mut rng)
        };
        let h = random_direction(&mut rng, theta.dim());

        let analytic = directional_derivative(&theta, &x, t, &h, &spec);
        let base = robust_welfare_at(&theta, &x, t, &spec);
        let mut bumped = theta.to_vec();
        for (slot, hv) in bumped.iter_mut().zip(&h) {
            *slot += step * hv;
        }
        let Ok(theta_up) = ParamVector::from_vec(&bumped) else {
            continue;
        };
        let numeric = (robust_welfare_at(&theta_up, &x, t, &spec) - base) / step;
        let tol = 1e-3 * (1.0 + analytic.abs().max(numeric.abs()));
        assert!(
            (analytic - numeric).abs() < tol,
            "trial {trial} (kink {force_kink}): analytic {analytic} vs numeric {numeric}"
        );
    }
    assert_eq!(checked_kinks, 200);
}

#[test]
fn central_differences_in_the_smooth_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(3141);
    let spec = WelfareSpec::new(1.0, 0.8, 0.0).unwrap();
    let step = 1e-6;
    for _ in 0..200 {
        let theta = random_theta(&mut rng);
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let t = 1.0;
        let h = random_direction(&mut rng, theta.dim());
        let analytic = directional_derivative(&theta, &x, t, &h, &spec);
        let up: Vec<f64> = theta.to_vec().iter().zip(&h).map(|(v, hv)| v + step * hv).collect();
        let dn: Vec<f64> = theta.to_vec().iter().zip(&h).map(|(v, hv)| v - step * hv).collect();
        let (Ok(tu), Ok(td)) = (ParamVector::from_vec(&up), ParamVector::from_vec(&dn)) else {
            continue;
        };
        let numeric = (robust_welfare_at(&tu, &x, t, &spec) - robust_welfare_at(&td, &x, t, &spec))
            / (2.0 * step);
        assert!(
            (analytic - numeric).abs() < 1e-5 * (1.0 + numeric.abs()),
            "analytic {analytic} vs central {numeric}"
        );
    }
}

#[test]
fn kink_membership_detected_at_tolerance() {
    let spec = WelfareSpec::new(0.0, 0.8, 0.0).unwrap();
    let theta = kink_theta(&[1.0, 0.0], 0.0, 2.0, &spec);
    let w = tobit_mean_zero(&theta, &[1.0, 0.0], 0.0);
    assert!((w - spec.eps_robust).abs() < KINK_TOL);
    // Ascent direction picks max(g, 0) = g; descent gives 0.
    let g = directional_derivative(&theta, &[1.0, 0.0], 0.0, &[1.0, 0.0, 0.0, 0.0], &spec);
    assert!(g > 0.0);
    let d = directional_derivative(&theta, &[1.0, 0.0], 0.0, &[-1.0, 0.0, 0.0, 0.0], &spec);
    assert_eq!(d, 0.0);
}
