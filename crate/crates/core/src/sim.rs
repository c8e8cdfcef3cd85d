//! Monte Carlo harness for the local-asymptotic risk comparison: sample
//! training data from the censored DGP, fit the Tobit model, build the
//! plug-in and ex-post Bayes rules, and evaluate welfare regret against the
//! oracle along the local perturbation grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::rules::{
    ex_post_bayes_from_draws, plug_in_rule, welfare_matrix, RuleKind, TieMode,
};
use crate::sum::fsum;
use crate::table::Table;
use crate::tobit::{tobit_mle, Dataset, QuasiPosterior, MLE_GRAD_TOL};
use crate::transport::{
    solve_max_transport, Coupling, DiscreteMarginal, SolveStatus, SupportPoint, TransportProblem,
};
use crate::welfare::{ParamVector, WelfareSpec};

/// Age distribution of the training and target populations: a truncated
/// normal with mean 4, standard deviation 2, support [1, 10].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn simulation_age() -> Self {
        TruncatedNormal { mean: 4.0, sd: 2.0, lo: 1.0, hi: 10.0 }
    }

    fn cdf_bounds(&self) -> (f64, f64) {
        (
            normal::cdf((self.lo - self.mean) / self.sd),
            normal::cdf((self.hi - self.mean) / self.sd),
        )
    }

    /// CDF of the truncated distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.cdf_bounds();
        if x <= self.lo {
            0.0
        } else if x >= self.hi {
            1.0
        } else {
            (normal::cdf((x - self.mean) / self.sd) - a) / (b - a)
        }
    }

    /// Inverse CDF; exact sampling without rejection.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!((0.0..=1.0).contains(&u));
        let (a, b) = self.cdf_bounds();
        if u == 0.0 {
            return self.lo;
        }
        if u == 1.0 {
            return self.hi;
        }
        let x = self.mean + self.sd * normal::quantile(a + u * (b - a));
        x.clamp(self.lo, self.hi)
    }

    /// Closed-form truncated-normal mean.
    pub fn analytic_mean(&self) -> f64 {
        let alpha = (self.lo - self.mean) / self.sd;
        let beta = (self.hi - self.mean) / self.sd;
        let z = normal::cdf(beta) - normal::cdf(alpha);
        self.mean + self.sd * (normal::pdf(alpha) - normal::pdf(beta)) / z
    }
}

fn default_theta0() -> ParamVector {
    ParamVector { beta: vec![-2.0, -3.0], alpha: 4.0, sigma: 10.0 }
}

fn default_h_grid() -> Vec<f64> {
    // {-2, -1.6, ..., 2}: 11 points, step 0.4.
    (0..11).map(|i| -2.0 + 0.4 * i as f64).collect()
}

fn default_capacity() -> f64 {
    0.75
}

fn default_eps() -> f64 {
    0.8
}

fn default_bins() -> usize {
    99
}

fn default_n() -> usize {
    200
}

fn default_reps() -> usize {
    200
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_theta0")]
    pub theta0: ParamVector,
    /// Training sample size per replication.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Replications J per grid point.
    #[serde(default = "default_reps")]
    pub replications: usize,
    /// Posterior draws L per replication.
    #[serde(default = "default_reps")]
    pub posterior_draws: usize,
    /// Fraction of the population that can be treated.
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    #[serde(default = "default_h_grid")]
    pub h_grid: Vec<f64>,
    pub lambda: f64,
    #[serde(default = "default_eps")]
    pub eps_robust: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Results do not depend on
    /// this.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.theta0.validate()?;
        if self.n < 1 || self.replications < 1 || self.posterior_draws < 1 {
            return Err(Error::invalid("n, replications, posterior_draws must be >= 1"));
        }
        if !(self.capacity > 0.0 && self.capacity < 1.0) {
            return Err(Error::invalid(format!("capacity must be in (0,1), got {}", self.capacity)));
        }
        if self.h_grid.is_empty() {
            return Err(Error::invalid("h grid must be nonempty"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("need at least two covariate bins"));
        }
        self.welfare_spec().validate()
    }

    pub fn welfare_spec(&self) -> WelfareSpec {
        WelfareSpec {
            lambda: self.lambda,
            eps_robust: self.eps_robust,
            tau: 0.0,
            floor: crate::welfare::FloorSpec::Tau,
        }
    }
}

/// Draw one training sample `{(y, x, t)}` of size `n` from the DGP at `θ`:
/// age truncated-normal, sex and treatment fair coin flips, outcome
/// `max(0, x'β + αt + u)` with `u ~ N(0, σ²)`.
pub fn sample_training_data(theta: &ParamVector, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    if theta.beta.len() != 2 {
        return Err(Error::invalid("the simulation DGP uses covariates (age, sex)"));
    }
    let age_dist = TruncatedNormal::simulation_age();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let age = age_dist.quantile(rng.random::<f64>());
        let sex = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let ti = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let noise: f64 = rng.sample(StandardNormal);
        let latent = theta.linear_index(&[age, sex], ti) + theta.sigma * noise;
        y.push(latent.max(0.0));
        x.push(vec![age, sex]);
        t.push(ti);
    }
    Dataset::new(y, x, t, 0.0)
}

/// Local perturbation `θ_nh = θ0 + h/√n` applied to every component.
pub fn perturb(theta0: &ParamVector, h: f64, n: usize) -> Result<ParamVector> {
    if n < 1 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let shift = h / (n as f64).sqrt();
    let v: Vec<f64> = theta0.to_vec().iter().map(|c| c + shift).collect();
    ParamVector::from_vec(&v)
        .map_err(|_| Error::invalid(format!("perturbation h = {h} drives sigma nonpositive")))
}

/// Discretize the (age, sex) population into `bins` cells: equal-probability
/// age cells within each sex (one sex gets the extra cell when `bins` is
/// odd), representative age at the cell median.
pub fn discretize_covariates(age_dist: &TruncatedNormal, bins: usize) -> Result<DiscreteMarginal> {
    if bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    let cells0 = bins.div_ceil(2);
    let cells1 = bins / 2;
    let mut points = Vec::with_capacity(bins);
    let mut masses = Vec::with_capacity(bins);
    for (sex, cells) in [(0.0, cells0), (1.0, cells1)] {
        for i in 0..cells {
            let u = (i as f64 + 0.5) / cells as f64;
            let age = age_dist.quantile(u);
            points.push(SupportPoint::new(format!("s{}a{:02}", sex as u8, i), vec![age, sex]));
            masses.push(0.5 / cells as f64);
        }
    }
    DiscreteMarginal::new(points, masses)
}

/// Per-rule Monte Carlo summary at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleStat {
    pub mean: f64,
    pub se: f64,
}

/// Risk estimates at one perturbation h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HRisk {
    pub h: f64,
    pub plug_in: RuleStat,
    pub ex_post: RuleStat,
    /// Replications dropped because the MLE did not converge.
    pub n_excluded: usize,
}

/// The estimated risk curve over the h grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub per_h: Vec<HRisk>,
}

impl RiskCurve {
    /// Arithmetic mean over the h grid per rule (the discretized ∫ R dh):
    /// `(plug_in, ex_post)`.
    pub fn average_risk(&self) -> (f64, f64) {
        let k = self.per_h.len() as f64;
        let p = fsum(self.per_h.iter().map(|r| r.plug_in.mean)) / k;
        let e = fsum(self.per_h.iter().map(|r| r.ex_post.mean)) / k;
        (p, e)
    }

    /// Standard error of the h-averaged risk per rule, treating grid points
    /// as independent (each h uses its own samples).
    pub fn average_risk_se(&self) -> (f64, f64) {
        let k = self.per_h.len() as f64;
        let p = fsum(self.per_h.iter().map(|r| r.plug_in.se.powi(2))).sqrt() / k;
        let e = fsum(self.per_h.iter().map(|r| r.ex_post.se.powi(2))).sqrt() / k;
        (p, e)
    }
}

/// Average conditional treatment probability per bin, for the allocation
/// heatmap at h = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationCell {
    pub age: f64,
    pub sex: f64,
    pub rule: String,
    pub treatment_probability: f64,
}

/// Full output of a simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub curve: RiskCurve,
    /// Raw per-replication regrets `(plug_in, ex_post)` per grid point,
    /// parallel to `curve.per_h`; excluded replications are absent.
    pub raw_regrets: Vec<Vec<(f64, f64)>>,
    /// Average allocations at h = 0 (empty when 0 is not on the grid).
    pub allocations: Vec<AllocationCell>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based seed for replication `j` at grid index `i`: parallel
/// replications get reproducible independent streams.
pub fn derive_seed(base: u64, i: u64, j: u64) -> u64 {
    let a = splitmix64(base ^ 0xA076_1D64_78BD_642F);
    let b = splitmix64(a ^ i.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    splitmix64(b ^ j.wrapping_mul(0x8EBC_6AF0_9C88_C6E3))
}

struct Replication {
    plug_regret: f64,
    ex_regret: f64,
    plug_coupling: Coupling,
    ex_coupling: Coupling,
}

fn run_replication(
    config: &SimConfig,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
    theta_nh: &ParamVector,
    w_nh: &Table,
    oracle_value: f64,
    seed: u64,
) -> Result<Option<Replication>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = sample_training_data(theta_nh, config.n, &mut rng)?;
    let fit = match tobit_mle(&data, None, MLE_GRAD_TOL) {
        Ok(f) if f.converged => f,
        Ok(_) => return Ok(None),
        Err(_) => return Ok(None),
    };

    let plug = plug_in_rule(&fit, grid, f_t, spec, TieMode::SolverVertex)?;
    let posterior = match QuasiPosterior::from_fit(&fit) {
        Ok(p) => p,
        Err(_) => return Ok(None),
    };
    let draws = posterior.sample(config.posterior_draws, &mut rng)?;
    let ex = ex_post_bayes_from_draws(&draws, grid, f_t, spec, TieMode::SolverVertex)?;

    for coupling in [&plug.coupling, &ex.coupling] {
        coupling.validate_feasible(grid, f_t)?;
    }

    let eval = |c: &Coupling| fsum(w_nh.data().iter().zip(c.mass().data()).map(|(w, m)| w * m));
    let plug_regret = oracle_value - eval(&plug.coupling);
    let ex_regret = oracle_value - eval(&ex.coupling);
    for r in [plug_regret, ex_regret] {
        if r < -1e-9 {
            return Err(Error::Numerical(format!(
                "oracle dominance violated: regret {r:.3e} at h-seed {seed}"
            )));
        }
    }
    Ok(Some(Replication {
        plug_regret: plug_regret.max(0.0),
        ex_regret: ex_regret.max(0.0),
        plug_coupling: plug.coupling,
        ex_coupling: ex.coupling,
    }))
}

fn mean_se(values: &[f64]) -> RuleStat {
    let n = values.len();
    if n == 0 {
        return RuleStat { mean: f64::NAN, se: f64::NAN };
    }
    let mean = fsum(values.iter().copied()) / n as f64;
    if n == 1 {
        return RuleStat { mean, se: 0.0 };
    }
    let var = fsum(values.iter().map(|v| (v - mean).powi(2))) / ((n - 1) as f64);
    RuleStat { mean, se: (var / n as f64).sqrt() }
}

/// Risk estimation at a single perturbation h (steps 1-3 of the protocol).
pub fn estimate_risk(config: &SimConfig, h: f64) -> Result<HRisk> {
    let mut cfg = config.clone();
    cfg.h_grid = vec![h];
    let result = run_simulation(&cfg)?;
    Ok(result.curve.per_h.into_iter().next().expect("one grid point"))
}

/// The full simulation protocol over the h grid. Deterministic for a fixed
/// config (including seed), regardless of worker count.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let grid = discretize_covariates(&TruncatedNormal::simulation_age(), config.bins)?;
    let f_t = DiscreteMarginal::bernoulli(config.capacity)?;
    let spec = config.welfare_spec();

    let run = || -> Result<SimResult> {
        let mut per_h = Vec::with_capacity(config.h_grid.len());
        let mut raw = Vec::with_capacity(config.h_grid.len());
        let mut allocations = Vec::new();
        for (hi, &h) in config.h_grid.iter().enumerate() {
            let theta_nh = perturb(&config.theta0, h, config.n)?;
            let w_nh = welfare_matrix(&theta_nh, &grid, &f_t, &spec)?;
            let problem = TransportProblem::new(w_nh.clone(), grid.clone(), f_t.clone())?;
            let oracle = solve_max_transport(&problem)?;
            if oracle.status != SolveStatus::Optimal {
                return Err(Error::NotConverged("oracle solve hit its pivot cap".into()));
            }
            oracle.coupling.validate_feasible(&grid, &f_t)?;

            let reps: Vec<Option<Replication>> = (0..config.replications)
                .into_par_iter()
                .map(|j| {
                    run_replication(
                        config,
                        &grid,
                        &f_t,
                        &spec,
                        &theta_nh,
                        &w_nh,
                        oracle.value,
                        derive_seed(config.seed, hi as u64, j as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;

            let included: Vec<&Replication> = reps.iter().flatten().collect();
            let n_excluded = config.replications - included.len();
            let plug: Vec<f64> = included.iter().map(|r| r.plug_regret).collect();
            let ex: Vec<f64> = included.iter().map(|r| r.ex_regret).collect();
            per_h.push(HRisk {
                h,
                plug_in: mean_se(&plug),
                ex_post: mean_se(&ex),
                n_excluded,
            });
            raw.push(included.iter().map(|r| (r.plug_regret, r.ex_regret)).collect());

            if h.abs() < 1e-12 && !included.is_empty() {
                let mut avg_plug = Table::zeros(grid.len(), f_t.len());
                let mut avg_ex = Table::zeros(grid.len(), f_t.len());
                for r in &included {
                    for (slot, v) in avg_plug.data_mut().iter_mut().zip(r.plug_coupling.mass().data()) {
                        *slot += v;
                    }
                    for (slot, v) in avg_ex.data_mut().iter_mut().zip(r.ex_coupling.mass().data()) {
                        *slot += v;
                    }
                }
                let inv = 1.0 / included.len() as f64;
                for t in [&mut avg_plug, &mut avg_ex] {
                    for v in t.data_mut() {
                        *v *= inv;
                    }
                }
                for (rule, table) in [
                    (RuleKind::Oracle.as_str(), oracle.coupling.mass()),
                    (RuleKind::PlugIn.as_str(), &avg_plug),
                    (RuleKind::ExPostBayes.as_str(), &avg_ex),
                ] {
                    for i in 0..grid.len() {
                        let mass = grid.mass(i);
                        let treated = table.get(i, 1);
                        allocations.push(AllocationCell {
                            age: grid.point(i).coords[0],
                            sex: grid.point(i).coords[1],
                            rule: rule.to_string(),
                            treatment_probability: if mass > 0.0 { treated / mass } else { 0.0 },
                        });
                    }
                }
            }
        }
        Ok(SimResult { curve: RiskCurve { per_h }, raw_regrets: raw, allocations })
    };

    match config.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(run)
        }
        None => run(),
    }
}
