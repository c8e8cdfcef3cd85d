//! Censored-regression (Tobit) likelihood, maximum likelihood via Newton
//! steps on `(β, α, log σ)`, observed information, and quasi-posterior
//! sampling `N(θ̂, (nÎ)⁻¹)`.
//!
//! All row sums (log-likelihood, score, information) go through exact
//! summation, so permuting dataset rows leaves every estimate bit-identical.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::sum::ExactSum;
use crate::table::Table;
use crate::welfare::ParamVector;

/// Observations `(y, x, t)` censored from below at `tau`: censored rows have
/// `y = tau` and contribute `log Φ((τ-m)/σ)`, uncensored rows the usual
/// Gaussian density term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    t: Vec<f64>,
    tau: f64,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>, t: Vec<f64>, tau: f64) -> Result<Self> {
        let n = y.len();
        if x.len() != n || t.len() != n {
            return Err(Error::Dimension(format!(
                "{} outcomes, {} covariate rows, {} treatments",
                n,
                x.len(),
                t.len()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        let dim = x[0].len();
        if x.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("covariate rows must share a dimension".into()));
        }
        if !tau.is_finite() {
            return Err(Error::invalid("tau must be finite"));
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::invalid(format!("y[{i}] is not finite")));
            }
            if yi < tau {
                return Err(Error::invalid(format!(
                    "y[{i}] = {yi} lies below the censor point {tau}"
                )));
            }
        }
        let k = dim + 2;
        if n < k + 2 {
            return Err(Error::invalid(format!(
                "need at least {} rows for {} parameters, got {n}",
                k + 2,
                k
            )));
        }
        Ok(Dataset { y, x, t, tau })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.x[0].len()
    }

    /// Parameter count `k = |β| + 2`.
    pub fn param_dim(&self) -> usize {
        self.covariate_dim() + 2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn censored_count(&self) -> usize {
        self.y.iter().filter(|&&v| v <= self.tau).count()
    }

    /// Regressor `(x..., t)` of row `i`.
    fn regressor(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.x[i].iter().copied().chain(std::iter::once(self.t[i]))
    }

    /// Rows in a new order; used by the permutation-invariance tests.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::Dimension("permutation length mismatch".into()));
        }
        Dataset::new(
            order.iter().map(|&i| self.y[i]).collect(),
            order.iter().map(|&i| self.x[i].clone()).collect(),
            order.iter().map(|&i| self.t[i]).collect(),
            self.tau,
        )
    }

    /// The same rows twice; information must double exactly.
    pub fn duplicated(&self) -> Self {
        let mut y = self.y.clone();
        y.extend_from_slice(&self.y);
        let mut x = self.x.clone();
        x.extend_from_slice(&self.x);
        let mut t = self.t.clone();
        t.extend_from_slice(&self.t);
        Dataset { y, x, t, tau: self.tau }
    }
}

/// Per-row first and second derivatives in `(m, σ)`.
struct RowDerivs {
    ll: f64,
    dm: f64,
    ds: f64,
    dmm: f64,
    dms: f64,
    dss: f64,
}

fn row_derivs(y: f64, m: f64, sigma: f64, tau: f64) -> RowDerivs {
    if y <= tau {
        let z = (tau - m) / sigma;
        let lam = normal::mills_ratio(z);
        let dlam = -z * lam - lam * lam;
        RowDerivs {
            ll: normal::log_cdf(z),
            dm: -lam / sigma,
            ds: -lam * z / sigma,
            dmm: dlam / (sigma * sigma),
            dms: (lam + dlam * z) / (sigma * sigma),
            dss: (z * z * dlam + 2.0 * z * lam) / (sigma * sigma),
        }
    } else {
        let r = (y - m) / sigma;
        RowDerivs {
            ll: -normal::LN_SQRT_2PI - sigma.ln() - 0.5 * r * r,
            dm: r / sigma,
            ds: (r * r - 1.0) / sigma,
            dmm: -1.0 / (sigma * sigma),
            dms: -2.0 * r / (sigma * sigma),
            dss: (1.0 - 3.0 * r * r) / (sigma * sigma),
        }
    }
}

/// Log-likelihood of the censored regression at `θ`.
pub fn tobit_loglik(theta: &ParamVector, data: &Dataset) -> Result<f64> {
    theta.validate()?;
    if theta.beta.len() != data.covariate_dim() {
        return Err(Error::Dimension("β dimension does not match the data".into()));
    }
    let mut acc = ExactSum::new();
    for i in 0..data.n() {
        let m = theta.linear_index(&data.x[i], data.t[i]);
        acc.add(row_derivs(data.y[i], m, theta.sigma, data.tau).ll);
    }
    Ok(acc.value())
}

/// Score vector in `(β, α, σ)` coordinates.
pub fn tobit_score(theta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    let (_, g, _) = derivatives_flat(theta, data)?;
    Ok(g)
}

/// Log-likelihood, score, and Hessian in flat `(β, α, σ)` coordinates.
fn derivatives_flat(theta: &ParamVector, data: &Dataset) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    theta.validate()?;
    if theta.beta.len() != data.covariate_dim() {
        return Err(Error::Dimension("β dimension does not match the data".into()));
    }
    let k = data.param_dim();
    let kg = k - 1; // γ = (β, α) block
    let mut ll = ExactSum::new();
    let mut grad: Vec<ExactSum> = (0..k).map(|_| ExactSum::new()).collect();
    let mut hess: Vec<ExactSum> = (0..k * (k + 1) / 2).map(|_| ExactSum::new()).collect();
    let tri = |a: usize, b: usize| -> usize {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        hi * (hi + 1) / 2 + lo
    };
    let mut reg = vec![0.0; kg];
    for i in 0..data.n() {
        for (slot, v) in reg.iter_mut().zip(data.regressor(i)) {
            *slot = v;
        }
        let m = theta.linear_index(&data.x[i], data.t[i]);
        let d = row_derivs(data.y[i], m, theta.sigma, data.tau);
        ll.add(d.ll);
        for a in 0..kg {
            grad[a].add(d.dm * reg[a]);
            for b in 0..=a {
                hess[tri(a, b)].add(d.dmm * reg[a] * reg[b]);
            }
            hess[tri(a, kg)].add(d.dms * reg[a]);
        }
        grad[kg].add(d.ds);
        hess[tri(kg, kg)].add(d.dss);
    }
    let g: Vec<f64> = grad.iter().map(ExactSum::value).collect();
    let mut h = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let v = hess[tri(a, b)].value();
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    Ok((ll.value(), g, h))
}

/// Same derivatives re-expressed for the optimizer coordinates `(γ, log σ)`.
fn derivatives_log_sigma(
    theta: &ParamVector,
    data: &Dataset,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let (ll, g, mut h) = derivatives_flat(theta, data)?;
    let k = g.len();
    let s = theta.sigma;
    let mut gs = DVector::from_column_slice(&g);
    gs[k - 1] *= s;
    for a in 0..k - 1 {
        h[(a, k - 1)] *= s;
        h[(k - 1, a)] = h[(a, k - 1)];
    }
    h[(k - 1, k - 1)] = h[(k - 1, k - 1)] * s * s + g[k - 1] * s;
    Ok((ll, gs, h))
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TobitFit {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    /// Observed information: negative Hessian of the total log-likelihood at
    /// `θ̂` in `(β, α, σ)` coordinates. Additive over rows.
    pub fisher: Table,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl TobitFit {
    pub fn information_matrix(&self) -> DMatrix<f64> {
        let k = self.theta_hat.dim();
        DMatrix::from_row_slice(k, k, self.fisher.data())
    }

    /// Information-based standard errors `sqrt(diag(Î⁻¹))`.
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let info = self.information_matrix();
        let chol = nalgebra::Cholesky::new(info)
            .ok_or_else(|| Error::Numerical("information matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        Ok((0..self.theta_hat.dim()).map(|i| inv[(i, i)].sqrt()).collect())
    }
}

/// Least squares of y on `(x, t)` over uncensored rows: the default
/// initializer.
fn least_squares_init(data: &Dataset) -> ParamVector {
    let kg = data.param_dim() - 1;
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.y[i] > data.tau).collect();
    let used: Vec<usize> = if rows.len() < kg + 1 { (0..data.n()).collect() } else { rows };
    // Exact sums keep the initializer, and hence the whole fit,
    // permutation-invariant.
    let mut xtx_acc: Vec<ExactSum> = (0..kg * kg).map(|_| ExactSum::new()).collect();
    let mut xty_acc: Vec<ExactSum> = (0..kg).map(|_| ExactSum::new()).collect();
    let mut reg = vec![0.0; kg];
    for &i in &used {
        for (slot, v) in reg.iter_mut().zip(data.regressor(i)) {
            *slot = v;
        }
        for a in 0..kg {
            xty_acc[a].add(reg[a] * data.y[i]);
            for b in 0..kg {
                xtx_acc[a * kg + b].add(reg[a] * reg[b]);
            }
        }
    }
    let mut xtx: DMatrix<f64> = DMatrix::zeros(kg, kg);
    let mut xty: DVector<f64> = DVector::zeros(kg);
    for a in 0..kg {
        xty[a] = xty_acc[a].value();
        for b in 0..kg {
            xtx[(a, b)] = xtx_acc[a * kg + b].value();
        }
    }
    for a in 0..kg {
        xtx[(a, a)] += 1e-10 * (1.0 + xtx[(a, a)].abs());
    }
    let gamma = xtx
        .clone()
        .lu()
        .solve(&xty)
        .unwrap_or_else(|| DVector::zeros(kg));
    let mut rss = ExactSum::new();
    for &i in &used {
        let mut m = 0.0;
        for (a, v) in data.regressor(i).enumerate() {
            m += gamma[a] * v;
        }
        rss.add((data.y[i] - m).powi(2));
    }
    let sigma = (rss.value() / used.len() as f64).sqrt().max(1e-6);
    ParamVector {
        beta: gamma.as_slice()[..kg - 1].to_vec(),
        alpha: gamma[kg - 1],
        sigma,
    }
}

/// Maximum Newton steps before a fit is flagged as non-converged.
pub const MLE_MAX_ITERS: usize = 200;
/// Default gradient ∞-norm tolerance in the `(γ, log σ)` coordinates.
pub const MLE_GRAD_TOL: f64 = 1e-8;

/// Maximize the Tobit likelihood. `init` defaults to least squares on the
/// uncensored rows; non-convergence is flagged on the fit, never silent.
pub fn tobit_mle(data: &Dataset, init: Option<&ParamVector>, tol: f64) -> Result<TobitFit> {
    let default_init;
    let init = match init {
        Some(p) => p,
        None => {
            default_init = least_squares_init(data);
            &default_init
        }
    };
    init.validate()?;
    if init.beta.len() != data.covariate_dim() {
        return Err(Error::Dimension("init β dimension does not match the data".into()));
    }

    let k = data.param_dim();
    let mut theta = init.clone();
    let (mut ll, mut grad, mut hess) = derivatives_log_sigma(&theta, data)?;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MLE_MAX_ITERS {
        if grad.amax() < tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Newton direction from -H d = g, with escalating ridge when the
        // Hessian is not negative definite.
        let mut neg_h = -&hess;
        let scale = (0..k).map(|i| neg_h[(i, i)].abs()).fold(1.0f64, f64::max);
        let mut jitter = 0.0;
        let direction = loop {
            if let Some(chol) = nalgebra::Cholesky::new(neg_h.clone()) {
                break chol.solve(&grad);
            }
            jitter = if jitter == 0.0 { 1e-8 * scale } else { jitter * 10.0 };
            if jitter > 1e12 * scale {
                return Err(Error::Numerical("cannot regularize Newton system".into()));
            }
            for i in 0..k {
                neg_h[(i, i)] += jitter;
            }
        };

        let slope: f64 = grad.dot(&direction);
        let mut step = 1.0;
        // Keep log σ moves sane.
        let dsig = direction[k - 1].abs();
        if dsig > 5.0 {
            step = 5.0 / dsig;
        }
        // Armijo on the log-likelihood while the predicted gain is above
        // floating-point noise; after that, accept steps that shrink the
        // gradient norm without materially decreasing the log-likelihood
        // (Newton keeps contracting the gradient even once ll is flat).
        let noise = 1e-12 * (1.0 + ll.abs());
        let mut improved = false;
        for _ in 0..60 {
            let mut cand = theta.to_vec();
            for a in 0..k - 1 {
                cand[a] += step * direction[a];
            }
            let new_sigma = theta.sigma.ln() + step * direction[k - 1];
            cand[k - 1] = new_sigma.exp();
            if let Ok(cand_theta) = ParamVector::from_vec(&cand) {
                if let Ok((cand_ll, cand_g, cand_h)) = derivatives_log_sigma(&cand_theta, data) {
                    let predicted = 1e-4 * step * slope.max(0.0);
                    let accept = cand_ll.is_finite()
                        && if predicted > noise {
                            cand_ll >= ll + predicted
                        } else {
                            cand_ll >= ll - noise && (cand_ll > ll || cand_g.amax() < grad.amax())
                        };
                    if accept {
                        theta = cand_theta;
                        ll = cand_ll;
                        grad = cand_g;
                        hess = cand_h;
                        improved = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !converged && grad.amax() < tol {
        converged = true;
    }

    let (ll_flat, _, h_flat) = derivatives_flat(&theta, data)?;
    let mut fisher = Table::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            fisher.set(a, b, -h_flat[(a, b)]);
        }
    }
    let info = DMatrix::from_row_slice(k, k, fisher.data());
    let pd = nalgebra::Cholesky::new(info).is_some();

    Ok(TobitFit {
        theta_hat: theta,
        loglik: ll_flat,
        fisher,
        n: data.n(),
        converged: converged && pd,
        iterations,
    })
}

/// Observed information at `θ`: the negative Hessian of the total
/// log-likelihood in `(β, α, σ)` coordinates. Errors on an indefinite
/// matrix, which signals degenerate data.
pub fn fisher_information(theta: &ParamVector, data: &Dataset) -> Result<Table> {
    let (_, _, h) = derivatives_flat(theta, data)?;
    let k = data.param_dim();
    let info = -h;
    if nalgebra::Cholesky::new(info.clone()).is_none() {
        return Err(Error::Numerical(
            "observed information is not positive definite (degenerate data)".into(),
        ));
    }
    let mut t = Table::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            t.set(a, b, info[(a, b)]);
        }
    }
    Ok(t)
}

/// The Gaussian quasi-posterior `N(θ̂, (nÎ)⁻¹)`; the covariance is the
/// inverse of the total observed information.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiPosterior {
    pub mean: ParamVector,
    pub covariance: Table,
}

impl QuasiPosterior {
    pub fn from_fit(fit: &TobitFit) -> Result<Self> {
        let k = fit.theta_hat.dim();
        let info = fit.information_matrix();
        let chol = nalgebra::Cholesky::new(info)
            .ok_or_else(|| Error::Numerical("information matrix is not positive definite".into()))?;
        let cov = chol.inverse();
        let mut covariance = Table::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                covariance.set(a, b, cov[(a, b)]);
            }
        }
        Ok(QuasiPosterior { mean: fit.theta_hat.clone(), covariance })
    }

    /// Draw `count` parameter vectors. σ is sampled through log σ (delta
    /// method on the covariance), so draws always satisfy σ > 0.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<ParamVector>> {
        let k = self.mean.dim();
        if self.covariance.rows() != k || self.covariance.cols() != k {
            return Err(Error::Dimension("covariance does not match parameter count".into()));
        }
        let mut cov = DMatrix::from_row_slice(k, k, self.covariance.data());
        let sig = self.mean.sigma;
        for a in 0..k {
            cov[(a, k - 1)] /= sig;
            cov[(k - 1, a)] = cov[(a, k - 1)];
        }
        cov[(k - 1, k - 1)] /= sig; // applied twice: row and column
        let chol = nalgebra::Cholesky::new(cov)
            .ok_or_else(|| Error::Numerical("posterior covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut mean_s = self.mean.to_vec();
        mean_s[k - 1] = sig.ln();

        let mut draws = Vec::with_capacity(count);
        let mut z = DVector::zeros(k);
        for _ in 0..count {
            for a in 0..k {
                z[a] = rng.sample(StandardNormal);
            }
            let shift = &l * &z;
            let mut v: Vec<f64> = (0..k).map(|a| mean_s[a] + shift[a]).collect();
            v[k - 1] = v[k - 1].exp();
            draws.push(ParamVector::from_vec(&v)?);
        }
        Ok(draws)
    }
}
