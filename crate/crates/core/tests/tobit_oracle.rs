//! Estimation checked against independent implementations: a
//! statrs-density-based likelihood, the simulated sampling distribution,
//! and CLT bounds on quasi-posterior draws.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use transplan::sim::sample_training_data;
use transplan::tobit::{tobit_loglik, tobit_mle, Dataset, QuasiPosterior, MLE_GRAD_TOL};
use transplan::welfare::ParamVector;

fn theta0() -> ParamVector {
    ParamVector::new(vec![-2.0, -3.0], 4.0, 10.0).unwrap()
}

/// Independent likelihood evaluation straight from the density definition.
fn loglik_reference(theta: &ParamVector, data: &Dataset) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        let m = theta.linear_index(&data.x()[i], data.t()[i]);
        let dist = Normal::new(m, theta.sigma).unwrap();
        let y = data.y()[i];
        total += if y <= data.tau() {
            dist.cdf(data.tau()).ln()
        } else {
            dist.ln_pdf(y)
        };
    }
    total
}

#[test]
fn loglik_matches_independent_density_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for _ in 0..20 {
        let data = sample_training_data(&theta0(), 300, &mut rng).unwrap();
        let theta = ParamVector::new(
            vec![rng.random_range(-4.0..0.0), rng.random_range(-5.0..0.0)],
            rng.random_range(0.0..6.0),
            rng.random_range(5.0..15.0),
        )
        .unwrap();
        let ours = tobit_loglik(&theta, &data).unwrap();
        let reference = loglik_reference(&theta, &data);
        assert!(
            (ours - reference).abs() < 1e-7 * (1.0 + ours.abs()),
            "ours {ours} vs reference {reference}"
        );
    }
}

#[test]
fn recovers_simulation_truth_at_n5000() {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let data = sample_training_data(&theta0(), 5000, &mut rng).unwrap();
    let fit = tobit_mle(&data, None, MLE_GRAD_TOL).unwrap();
    assert!(fit.converged);
    let se = fit.standard_errors().unwrap();
    for ((est, truth), se) in fit
        .theta_hat
        .to_vec()
        .iter()
        .zip(theta0().to_vec())
        .zip(&se)
    {
        assert!(
            (est - truth).abs() < 3.0 * se,
            "estimate {est} vs truth {truth} (se {se})"
        );
    }
}

#[test]
fn posterior_mean_and_covariance_match_clt_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let data = sample_training_data(&theta0(), 5000, &mut rng).unwrap();
    let fit = tobit_mle(&data, None, MLE_GRAD_TOL).unwrap();
    let post = QuasiPosterior::from_fit(&fit).unwrap();
    let k = post.mean.dim();
    let count = 100_000usize;
    let draws = post.sample(count, &mut rng).unwrap();

    let mut mean = vec![0.0f64; k];
    for d in &draws {
        for (slot, v) in mean.iter_mut().zip(d.to_vec()) {
            *slot += v;
        }
    }
    for v in &mut mean {
        *v /= count as f64;
    }
    for a in 0..k {
        let bound = 4.0 * (post.covariance.get(a, a) / count as f64).sqrt();
        let err = (mean[a] - post.mean.to_vec()[a]).abs();
        assert!(err < bound, "component {a}: |{err}| vs CLT bound {bound}");
    }

    // Sample covariance approaches (nÎ)⁻¹.
    for a in 0..k {
        let mut var = 0.0;
        for d in &draws {
            var += (d.to_vec()[a] - mean[a]).powi(2);
        }
        var /= (count - 1) as f64;
        let target = post.covariance.get(a, a);
        assert!(
            (var - target).abs() < 0.1 * target,
            "variance {var} vs covariance {target}"
        );
    }
}

#[test]
fn censoring_rate_matches_independent_oracle() {
    // Empirical censoring fraction against E[Φ(-m/σ)] averaged over fresh
    // covariate draws evaluated with statrs.
    let n = 400_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let data = sample_training_data(&theta0(), n, &mut rng).unwrap();
    let empirical = data.censored_count() as f64 / n as f64;

    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let age = transplan::sim::TruncatedNormal::simulation_age();
    let mut rng2 = ChaCha8Rng::seed_from_u64(7007);
    let mut acc = 0.0;
    let draws = 400_000usize;
    for _ in 0..draws {
        let a = age.quantile(rng2.random::<f64>());
        let s = if rng2.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let t = if rng2.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let m = -2.0 * a - 3.0 * s + 4.0 * t;
        acc += std_normal.cdf(-m / 10.0);
    }
    let oracle = acc / draws as f64;
    assert!(
        (empirical - oracle).abs() < 4e-3,
        "empirical {empirical} vs oracle {oracle}"
    );
}
