//! Assignment rules as transport solves: oracle, plug-in, and ex-post Bayes,
//! plus welfare and regret evaluation and explicit tie handling for
//! degenerate optima.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{fsum, ExactSum};
use crate::table::Table;
use crate::tobit::{QuasiPosterior, TobitFit};
use crate::transport::{
    minimal_h_selection, optimal_face, product_metric, solve_max_transport, Coupling,
    CovariateScaling, DiscreteMarginal, SolveStatus, TransportProblem,
};
use crate::welfare::{robust_welfare_at, ParamVector, WelfareSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Oracle,
    PlugIn,
    ExPostBayes,
}

impl RuleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleKind::Oracle => "oracle",
            RuleKind::PlugIn => "plug_in",
            RuleKind::ExPostBayes => "ex_post_bayes",
        }
    }
}

/// How a degenerate optimal face is resolved into one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// The simplex vertex, deterministic under Bland's rule.
    #[default]
    SolverVertex,
    /// Residual capacity spread proportionally to bin mass over the tied
    /// region (random assignment in expectation): iterative proportional
    /// fitting of the independent coupling restricted to the optimal face.
    UniformSplit,
    /// The H-minimizing face point with the independent coupling as
    /// reference.
    MinimalH,
}

/// Which parameter the welfare matrix was built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSummary {
    Point(ParamVector),
    Posterior { mean: ParamVector, draws: usize },
}

/// A resolved assignment rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleOutput {
    pub coupling: Coupling,
    pub rule_kind: RuleKind,
    pub theta_used: ThetaSummary,
    /// Objective value of the solve that produced the coupling.
    pub welfare_at_solution: f64,
    pub tie_mode: TieMode,
}

/// Welfare matrix `w_R(θ, x_i, t_j)` over grid bins and treatment levels;
/// the treatment value of a level is its first coordinate.
pub fn welfare_matrix(
    theta: &ParamVector,
    grid: &DiscreteMarginal,
    levels: &DiscreteMarginal,
    spec: &WelfareSpec,
) -> Result<Table> {
    theta.validate()?;
    spec.validate()?;
    let mut w = Table::zeros(grid.len(), levels.len());
    for i in 0..grid.len() {
        let x = &grid.point(i).coords;
        for j in 0..levels.len() {
            let t = levels.point(j).coords[0];
            w.set(i, j, robust_welfare_at(theta, x, t, spec));
        }
    }
    if !w.all_finite() {
        return Err(Error::Numerical("welfare matrix has non-finite entries".into()));
    }
    Ok(w)
}

/// Posterior-averaged welfare matrix `L⁻¹ Σ_ℓ w_R(θ_ℓ, x, t)`. Linearity of
/// `W` in μ makes maximizing the averaged matrix exactly the ex-post Bayes
/// objective. Exact summation keeps the average invariant to permuting the
/// draws.
pub fn averaged_welfare_matrix(
    draws: &[ParamVector],
    grid: &DiscreteMarginal,
    levels: &DiscreteMarginal,
    spec: &WelfareSpec,
) -> Result<Table> {
    if draws.is_empty() {
        return Err(Error::invalid("need at least one posterior draw"));
    }
    spec.validate()?;
    let mut acc: Vec<ExactSum> = (0..grid.len() * levels.len()).map(|_| ExactSum::new()).collect();
    for theta in draws {
        theta.validate()?;
        for i in 0..grid.len() {
            let x = &grid.point(i).coords;
            for j in 0..levels.len() {
                let t = levels.point(j).coords[0];
                acc[i * levels.len() + j].add(robust_welfare_at(theta, x, t, spec));
            }
        }
    }
    let inv = 1.0 / draws.len() as f64;
    let data: Vec<f64> = acc.iter().map(|a| a.value() * inv).collect();
    Table::from_flat(grid.len(), levels.len(), data)
}

/// Iterative proportional fitting of the independent coupling onto the
/// optimal face: forced bins keep their forced arm, the tied region shares
/// the residual capacity in proportion to bin mass.
fn uniform_split_on_face(problem: &TransportProblem) -> Result<(Coupling, f64)> {
    let (_, mask) = optimal_face(problem)?;
    let (m, n) = (problem.bins(), problem.levels());
    let a = problem.source.masses();
    let b = problem.target.masses();
    let mut q = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            if mask[i * n + j] {
                q[i * n + j] = a[i] * b[j];
            }
        }
    }
    for _ in 0..10_000 {
        for i in 0..m {
            let rs: f64 = q[i * n..(i + 1) * n].iter().sum();
            if rs > 0.0 {
                let f = a[i] / rs;
                for j in 0..n {
                    q[i * n + j] *= f;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let cs: f64 = (0..m).map(|i| q[i * n + j]).sum();
            if cs > 0.0 {
                let f = b[j] / cs;
                for i in 0..m {
                    q[i * n + j] *= f;
                }
            }
            worst = worst.max((cs - b[j]).abs());
        }
        if worst < 1e-13 {
            break;
        }
    }
    let coupling = Coupling::new(Table::from_flat(m, n, q)?)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let value = problem.objective(&coupling);
    Ok((coupling, value))
}

fn solve_with_tie_mode(problem: &TransportProblem, tie: TieMode) -> Result<(Coupling, f64)> {
    match tie {
        TieMode::SolverVertex => {
            let report = solve_max_transport(problem)?;
            if report.status != SolveStatus::Optimal {
                return Err(Error::NotConverged("transport solve hit its pivot cap".into()));
            }
            Ok((report.coupling, report.value))
        }
        TieMode::UniformSplit => uniform_split_on_face(problem),
        TieMode::MinimalH => {
            let metric = product_metric(&problem.source, &problem.target, CovariateScaling::Standardized)?;
            let reference = Coupling::independent(&problem.source, &problem.target);
            let sel = minimal_h_selection(problem, &reference, &metric)?;
            Ok((sel.coupling, sel.welfare))
        }
    }
}

/// The infeasible optimum at the true parameter: the regret baseline.
pub fn oracle_rule(
    theta: &ParamVector,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
    tie: TieMode,
) -> Result<RuleOutput> {
    let w = welfare_matrix(theta, grid, f_t, spec)?;
    let problem = TransportProblem::new(w, grid.clone(), f_t.clone())?;
    let (coupling, value) = solve_with_tie_mode(&problem, tie)?;
    Ok(RuleOutput {
        coupling,
        rule_kind: RuleKind::Oracle,
        theta_used: ThetaSummary::Point(theta.clone()),
        welfare_at_solution: value,
        tie_mode: tie,
    })
}

/// Transport solve at the point estimate `θ̂`.
pub fn plug_in_rule(
    fit: &TobitFit,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
    tie: TieMode,
) -> Result<RuleOutput> {
    if !fit.converged {
        return Err(Error::invalid("plug-in rule requires a converged fit"));
    }
    let w = welfare_matrix(&fit.theta_hat, grid, f_t, spec)?;
    let problem = TransportProblem::new(w, grid.clone(), f_t.clone())?;
    let (coupling, value) = solve_with_tie_mode(&problem, tie)?;
    Ok(RuleOutput {
        coupling,
        rule_kind: RuleKind::PlugIn,
        theta_used: ThetaSummary::Point(fit.theta_hat.clone()),
        welfare_at_solution: value,
        tie_mode: tie,
    })
}

/// Ex-post Bayes rule from explicit posterior draws.
pub fn ex_post_bayes_from_draws(
    draws: &[ParamVector],
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
    tie: TieMode,
) -> Result<RuleOutput> {
    let w = averaged_welfare_matrix(draws, grid, f_t, spec)?;
    let problem = TransportProblem::new(w, grid.clone(), f_t.clone())?;
    let (coupling, value) = solve_with_tie_mode(&problem, tie)?;
    let k = draws[0].dim();
    let mut mean = vec![0.0; k];
    for d in draws {
        for (slot, v) in mean.iter_mut().zip(d.to_vec()) {
            *slot += v;
        }
    }
    for v in &mut mean {
        *v /= draws.len() as f64;
    }
    Ok(RuleOutput {
        coupling,
        rule_kind: RuleKind::ExPostBayes,
        theta_used: ThetaSummary::Posterior {
            mean: ParamVector::from_vec(&mean)?,
            draws: draws.len(),
        },
        welfare_at_solution: value,
        tie_mode: tie,
    })
}

/// Ex-post Bayes rule: welfare averaged over `count` quasi-posterior draws,
/// then one transport solve.
pub fn ex_post_bayes_rule(
    fit: &TobitFit,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
    count: usize,
    rng: &mut impl Rng,
    tie: TieMode,
) -> Result<RuleOutput> {
    if !fit.converged {
        return Err(Error::invalid("ex-post Bayes rule requires a converged fit"));
    }
    if count == 0 {
        return Err(Error::invalid("need at least one posterior draw"));
    }
    let posterior = QuasiPosterior::from_fit(fit)?;
    let draws = posterior.sample(count, rng)?;
    ex_post_bayes_from_draws(&draws, grid, f_t, spec, tie)
}

/// `W(θ, μ) = Σ w_R(θ,x,t)·μ(x,t)`, linear in the coupling.
pub fn welfare_of(
    theta: &ParamVector,
    coupling: &Coupling,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
) -> Result<f64> {
    let w = welfare_matrix(theta, grid, f_t, spec)?;
    if coupling.bins() != w.rows() || coupling.levels() != w.cols() {
        return Err(Error::Dimension("coupling shape does not match the grid".into()));
    }
    Ok(fsum(w.data().iter().zip(coupling.mass().data()).map(|(a, b)| a * b)))
}

/// Welfare regret `W*(θ) - W(θ, μ)`; nonnegative up to solver tolerance.
pub fn regret(
    theta: &ParamVector,
    coupling: &Coupling,
    grid: &DiscreteMarginal,
    f_t: &DiscreteMarginal,
    spec: &WelfareSpec,
) -> Result<f64> {
    let w = welfare_matrix(theta, grid, f_t, spec)?;
    let problem = TransportProblem::new(w, grid.clone(), f_t.clone())?;
    let best = solve_max_transport(&problem)?;
    if best.status != SolveStatus::Optimal {
        return Err(Error::NotConverged("regret baseline solve hit its pivot cap".into()));
    }
    let achieved = problem.objective(coupling);
    Ok(best.value - achieved)
}
