//! Censored-outcome welfare: Tobit conditional means, the robust (maxmin)
//! utility, welfare contrasts, and directional derivatives in the parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Tobit parameters `θ = (β, α, σ)`: covariate coefficients, treatment
/// coefficient, error scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub sigma: f64,
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, alpha: f64, sigma: f64) -> Result<Self> {
        let p = ParamVector { beta, alpha, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.alpha.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(())
    }

    /// Number of parameters `k = |β| + 2`.
    pub fn dim(&self) -> usize {
        self.beta.len() + 2
    }

    /// Flat `(β..., α, σ)` ordering used for gradients and information.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.alpha);
        v.push(self.sigma);
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(Error::Dimension("parameter vector needs at least 3 entries".into()));
        }
        ParamVector::new(v[..v.len() - 2].to_vec(), v[v.len() - 2], v[v.len() - 1])
    }

    /// Linear index `m = x'β + α·t`.
    pub fn linear_index(&self, x: &[f64], t: f64) -> f64 {
        assert_eq!(x.len(), self.beta.len(), "covariate dimension mismatch");
        let mut m = self.alpha * t;
        for (xi, bi) in x.iter().zip(&self.beta) {
            m += xi * bi;
        }
        m
    }
}

/// Lower support bound `y_ℓ(t)` used inside the robust max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorSpec {
    /// Floor equals the censor point τ (the default; 0 when τ = 0).
    Tau,
    /// One floor for every arm.
    Uniform(f64),
    /// Separate floors for control (t = 0) and treatment (t ≠ 0).
    PerArm { control: f64, treated: f64 },
}

/// Utility-function configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSpec {
    /// Weight on the smooth mean term; 1 is fully smooth, 0 fully robust.
    pub lambda: f64,
    /// Robustness radius ε of the Wasserstein neighborhood.
    pub eps_robust: f64,
    /// Censor point of the outcome.
    pub tau: f64,
    #[serde(default = "default_floor")]
    pub floor: FloorSpec,
}

fn default_floor() -> FloorSpec {
    FloorSpec::Tau
}

impl WelfareSpec {
    pub fn new(lambda: f64, eps_robust: f64, tau: f64) -> Result<Self> {
        let spec = WelfareSpec { lambda, eps_robust, tau, floor: FloorSpec::Tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must be in [0,1], got {}", self.lambda)));
        }
        if !(self.eps_robust > 0.0) || !self.eps_robust.is_finite() {
            return Err(Error::invalid(format!(
                "eps_robust must be positive, got {}",
                self.eps_robust
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::invalid("tau must be finite"));
        }
        Ok(())
    }

    pub fn floor_for(&self, t: f64) -> f64 {
        match &self.floor {
            FloorSpec::Tau => self.tau,
            FloorSpec::Uniform(f) => *f,
            FloorSpec::PerArm { control, treated } => {
                if t == 0.0 {
                    *control
                } else {
                    *treated
                }
            }
        }
    }
}

/// `E[max(0, N(m, σ²))]` with `m = x'β + α·t`: the conditional mean outcome
/// of the zero-censored Tobit model,
/// `w = m - m·Φ(-m/σ) + σ·φ(-m/σ)`.
pub fn tobit_mean_zero(theta: &ParamVector, x: &[f64], t: f64) -> f64 {
    tobit_mean_tau(theta, x, t, 0.0)
}

/// `E[max(τ, N(m, σ²))] = m + (τ-m)·Φ((τ-m)/σ) + σ·φ((τ-m)/σ)`.
pub fn tobit_mean_tau(theta: &ParamVector, x: &[f64], t: f64, tau: f64) -> f64 {
    let m = theta.linear_index(x, t);
    censored_mean(m, theta.sigma, tau)
}

/// Censored mean in terms of the linear index.
pub fn censored_mean(m: f64, sigma: f64, tau: f64) -> f64 {
    let z = (tau - m) / sigma;
    m + (tau - m) * normal::cdf(z) + sigma * normal::pdf(z)
}

/// Gradient of [`tobit_mean_tau`] in `θ = (β, α, σ)`:
/// `∂w/∂m = 1 - Φ(z)`, `∂w/∂σ = φ(z)` with `z = (τ-m)/σ`, chained through
/// `m = x'β + α·t`.
pub fn tobit_mean_gradient(theta: &ParamVector, x: &[f64], t: f64, tau: f64) -> Vec<f64> {
    let m = theta.linear_index(x, t);
    let z = (tau - m) / theta.sigma;
    let dm = 1.0 - normal::cdf(z);
    let mut g = Vec::with_capacity(theta.dim());
    for xi in x {
        g.push(xi * dm);
    }
    g.push(t * dm);
    g.push(normal::pdf(z));
    g
}

/// Robust utility `w_R = λ·w + (1-λ)·max(w - ε, floor)` applied to a raw
/// conditional-mean welfare value.
pub fn robust_welfare(w_raw: f64, spec: &WelfareSpec, t: f64) -> f64 {
    let floor = spec.floor_for(t);
    spec.lambda * w_raw + (1.0 - spec.lambda) * (w_raw - spec.eps_robust).max(floor)
}

/// The full robust welfare `w_R(θ, x, t)` of the configured censored model.
pub fn robust_welfare_at(theta: &ParamVector, x: &[f64], t: f64, spec: &WelfareSpec) -> f64 {
    robust_welfare(tobit_mean_tau(theta, x, t, spec.tau), spec, t)
}

/// Welfare contrast `w_R(θ, x, 1) - w_R(θ, x, 0)`.
pub fn welfare_contrast(theta: &ParamVector, x: &[f64], spec: &WelfareSpec) -> f64 {
    robust_welfare_at(theta, x, 1.0, spec) - robust_welfare_at(theta, x, 0.0, spec)
}

/// Tolerance that selects the kink branch where `w - ε` meets the floor.
pub const KINK_TOL: f64 = 1e-10;

/// Directional derivative of `w_R(θ, x, t)` at `θ` in direction `h`
/// (ordered `(β..., α, σ)`).
///
/// The smooth term contributes `λ·∇w·h`; the max term contributes
/// `∇w·h`, `max(∇w·h, 0)`, or `0` according to whether `w - ε` is above,
/// at, or below the floor. Positively homogeneous in `h` by construction.
pub fn directional_derivative(
    theta: &ParamVector,
    x: &[f64],
    t: f64,
    h: &[f64],
    spec: &WelfareSpec,
) -> f64 {
    assert_eq!(h.len(), theta.dim(), "direction dimension mismatch");
    let grad = tobit_mean_gradient(theta, x, t, spec.tau);
    let g: f64 = grad.iter().zip(h).map(|(a, b)| a * b).sum();
    let w_raw = tobit_mean_tau(theta, x, t, spec.tau);
    let slack = w_raw - spec.eps_robust - spec.floor_for(t);
    let max_term = if slack > KINK_TOL {
        g
    } else if slack >= -KINK_TOL {
        g.max(0.0)
    } else {
        0.0
    };
    spec.lambda * g + (1.0 - spec.lambda) * max_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn theta0() -> ParamVector {
        // Simulation truth: β = (-2, -3), α = 4, σ = 10.
        ParamVector::new(vec![-2.0, -3.0], 4.0, 10.0).unwrap()
    }

    #[test]
    fn zero_index_mean_is_sigma_phi0() {
        let theta = ParamVector::new(vec![0.0], 0.0, 10.0).unwrap();
        // σ·φ(0) = 10/sqrt(2π); cross-checked by the Monte Carlo oracle in
        // tests/welfare_oracle.rs.
        assert_abs_diff_eq!(
            tobit_mean_zero(&theta, &[1.0], 0.0),
            3.989_422_804_014_327,
            epsilon = 1e-12
        );
    }

    #[test]
    fn simulation_truth_point() {
        // x = (1, 0), t = 1 gives m = 2; frozen from the closed form and
        // cross-checked by Monte Carlo in tests/welfare_oracle.rs.
        assert_abs_diff_eq!(
            tobit_mean_zero(&theta0(), &[1.0, 0.0], 1.0),
            5.068_946_358_659_611,
            epsilon = 1e-9
        );
    }

    #[test]
    fn uncensored_limit() {
        let theta = ParamVector::new(vec![50.0], 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(tobit_mean_zero(&theta, &[1.0], 0.0), 50.0, epsilon = 1e-10);
    }

    #[test]
    fn tau_far_below_mean_vanishes() {
        let theta = ParamVector::new(vec![3.0], 1.0, 2.0).unwrap();
        let m = theta.linear_index(&[1.0], 1.0);
        let tau = m - 50.0 * theta.sigma;
        assert_abs_diff_eq!(tobit_mean_tau(&theta, &[1.0], 1.0, tau), m, epsilon = 1e-10);
    }

    #[test]
    fn tau_at_mean() {
        let theta = ParamVector::new(vec![2.0], 0.0, 5.0).unwrap();
        let m = 2.0;
        assert_abs_diff_eq!(
            tobit_mean_tau(&theta, &[1.0], 0.0, m),
            m + 5.0 * normal::pdf(0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn tau_zero_matches_zero_censored() {
        let mut seed = 1234u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..1000 {
            let theta = ParamVector::new(vec![next(), next()], next(), next().abs() + 0.5).unwrap();
            let x = [next(), next()];
            let t = if next() > 0.0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(
                tobit_mean_tau(&theta, &x, t, 0.0),
                tobit_mean_zero(&theta, &x, t),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn mean_dominates_floor_and_index() {
        let theta = theta0();
        for i in -30..30 {
            let x = [i as f64 * 0.3, (i % 2) as f64];
            for t in [0.0, 1.0] {
                let m = theta.linear_index(&x, t);
                let w = tobit_mean_zero(&theta, &x, t);
                assert!(w >= 0.0);
                assert!(w >= m.max(0.0) - 1e-12);
            }
        }
    }

    #[test]
    fn robust_welfare_branches() {
        let spec = WelfareSpec::new(1.0, 0.8, 0.0).unwrap();
        assert_abs_diff_eq!(robust_welfare(3.0, &spec, 1.0), 3.0);
        let spec0 = WelfareSpec::new(0.0, 0.8, 0.0).unwrap();
        // Kink region: w_raw below floor + ε collapses to the floor.
        assert_abs_diff_eq!(robust_welfare(0.4, &spec0, 1.0), 0.0);
        // ε = 0.8, w_raw = 3.0, floor 0: the max binds above the floor.
        assert_abs_diff_eq!(robust_welfare(3.0, &spec0, 1.0), 2.2);
    }

    #[test]
    fn contrast_zero_when_both_arms_censored() {
        let spec = WelfareSpec::new(0.0, 0.8, 0.0).unwrap();
        // Strongly negative indices put both arms below ε.
        let theta = ParamVector::new(vec![-10.0], 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(welfare_contrast(&theta, &[2.0], &spec), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn contrast_is_mean_difference_when_smooth() {
        let spec = WelfareSpec::new(1.0, 0.8, 0.0).unwrap();
        let theta = theta0();
        let x = [1.0, 0.0];
        let expect = tobit_mean_zero(&theta, &x, 1.0) - tobit_mean_zero(&theta, &x, 0.0);
        assert_abs_diff_eq!(welfare_contrast(&theta, &x, &spec), expect, epsilon = 1e-14);
    }

    #[test]
    fn directional_derivative_positive_homogeneity() {
        let spec = WelfareSpec::new(0.3, 0.8, 0.0).unwrap();
        let theta = theta0();
        let h = [0.3, -1.2, 0.7, 0.1];
        let x = [1.5, 1.0];
        let d1 = directional_derivative(&theta, &x, 1.0, &h, &spec);
        for c in [0.5, 2.0, 7.5] {
            let hc: Vec<f64> = h.iter().map(|v| v * c).collect();
            let dc = directional_derivative(&theta, &x, 1.0, &hc, &spec);
            assert_abs_diff_eq!(dc, c * d1, epsilon = 1e-12 * c.max(1.0));
        }
    }

    #[test]
    fn kink_with_descent_direction_contributes_zero() {
        // Construct θ, x so that w - ε sits exactly at the floor, then pick
        // h with ∇w·h < 0: the max term must vanish.
        let spec = WelfareSpec::new(0.0, 0.8, 0.0).unwrap();
        let sigma = 2.0;
        // Solve censored_mean(m, 2, 0) = 0.8 by bisection.
        let (mut lo, mut hi) = (-50.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if censored_mean(mid, sigma, 0.0) < spec.eps_robust {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = 0.5 * (lo + hi);
        let theta = ParamVector::new(vec![m], 0.0, sigma).unwrap();
        let x = [1.0];
        let w = tobit_mean_zero(&theta, &x, 0.0);
        assert!((w - spec.eps_robust).abs() < KINK_TOL);
        // ∇w·h < 0 via a pure-β descent direction.
        let h = [-1.0, 0.0, 0.0];
        assert_abs_diff_eq!(directional_derivative(&theta, &x, 0.0, &h, &spec), 0.0);
        // And the ascent direction picks up the gradient.
        let up = [1.0, 0.0, 0.0];
        let g = tobit_mean_gradient(&theta, &x, 0.0, 0.0)[0];
        assert_abs_diff_eq!(directional_derivative(&theta, &x, 0.0, &up, &spec), g, epsilon = 1e-14);
    }

    #[test]
    fn robust_welfare_is_1_lipschitz_in_raw_welfare() {
        let spec = WelfareSpec::new(0.25, 0.8, 0.0).unwrap();
        let mut prev = None;
        for i in 0..400 {
            let w = -2.0 + i as f64 * 0.013;
            let r = robust_welfare(w, &spec, 1.0);
            if let Some((pw, pr)) = prev {
                let dw: f64 = w - pw;
                let dr: f64 = r - pr;
                assert!(dr.abs() <= dw.abs() + 1e-12);
                assert!(dr >= -1e-12); // monotone nondecreasing
            }
            prev = Some((w, r));
        }
    }
}
