//! Squared-Wasserstein penalty and the penalized / selection solvers.
//!
//! `H(μ) = d_W(μ, ν)²` over couplings viewed as distributions on the product
//! support. `solve_penalized` maximizes `scale·W(μ) - ε·H(μ)` by Frank-Wolfe
//! on the transportation polytope; `minimal_h_selection` minimizes `H` over
//! the optimal face of the welfare LP, which is the ε↓0 limit of the
//! penalized solutions and picks one coupling out of a degenerate optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::fsum;
use crate::table::Table;
use crate::transport::coupling::Coupling;
use crate::transport::metric::GroundMetric;
use crate::transport::problem::{solve_max_transport, SolveReport, SolveStatus, TransportProblem};
use crate::transport::simplex::solve_min_transport;
use crate::transport::wasserstein::{wasserstein1_masses, WassersteinSolution};

/// Frank-Wolfe stops once the duality gap falls below this.
pub const FW_GAP_TOL: f64 = 1e-8;
/// Frank-Wolfe iteration cap.
pub const FW_MAX_ITERS: usize = 10_000;

fn check_penalty_inputs(mu: &Coupling, reference: &Coupling, metric: &GroundMetric) -> Result<()> {
    if mu.bins() != reference.bins() || mu.levels() != reference.levels() {
        return Err(Error::Dimension(format!(
            "couplings are {}x{} vs {}x{}",
            mu.bins(),
            mu.levels(),
            reference.bins(),
            reference.levels()
        )));
    }
    let cells = mu.bins() * mu.levels();
    if metric.len() != cells {
        return Err(Error::Dimension(format!(
            "metric covers {} points but couplings have {} cells",
            metric.len(),
            cells
        )));
    }
    for (a, b) in mu.row_sums().iter().zip(reference.row_sums()) {
        if (a - b).abs() > 1e-9 {
            return Err(Error::invalid("couplings do not share the source marginal"));
        }
    }
    for (a, b) in mu.col_sums().iter().zip(reference.col_sums()) {
        if (a - b).abs() > 1e-9 {
            return Err(Error::invalid("couplings do not share the target marginal"));
        }
    }
    Ok(())
}

/// `d_W(μ, ν)` between two couplings on the product support.
pub fn coupling_distance(
    mu: &Coupling,
    reference: &Coupling,
    metric: &GroundMetric,
) -> Result<WassersteinSolution> {
    check_penalty_inputs(mu, reference, metric)?;
    wasserstein1_masses(&mu.flat_masses(), &reference.flat_masses(), metric)
}

/// Squared-Wasserstein penalty `H(μ) = d_W(μ, ν)²`.
pub fn penalty_h(mu: &Coupling, reference: &Coupling, metric: &GroundMetric) -> Result<f64> {
    Ok(coupling_distance(mu, reference, metric)?.distance.powi(2))
}

/// Outcome of a Frank-Wolfe selection solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub coupling: Coupling,
    /// Welfare objective `Σ w·μ` at the solution.
    pub welfare: f64,
    /// Penalty `H(μ)` at the solution.
    pub h: f64,
    /// Achieved Frank-Wolfe duality gap.
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Concave 1-d maximization along `γ ∈ [0,1]` by ternary search.
fn line_search(mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..36 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let g = 0.5 * (lo + hi);
    (g, f(g))
}

struct FwState {
    mass: Vec<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
}


/// Generic Frank-Wolfe maximizer over the transportation polytope.
///
/// `gradient` maps current masses to the objective gradient per cell;
/// `objective` evaluates the full objective. The linear step solves a
/// transportation LP; cells where `allowed` is false are priced out with a
/// large cost so the iterate stays on the restricted polytope. The scheduled
/// step `2/(k+2)` is compared against a concave line search along the
/// segment and the better of the two is taken.
fn frank_wolfe(
    a: &[f64],
    b: &[f64],
    start: Vec<f64>,
    allowed: Option<&[bool]>,
    mut gradient: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<FwState> {
    let (m, n) = (a.len(), b.len());
    let mut mass = start;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut best = objective(&mass)?;

    while iterations < FW_MAX_ITERS {
        let grad = gradient(&mass)?;
        // Linear maximization oracle: min over the polytope of -grad.
        let mut cost = Table::zeros(m, n);
        let mut max_abs = 0.0f64;
        for (idx, &g) in grad.iter().enumerate() {
            max_abs = max_abs.max(g.abs());
            cost.data_mut()[idx] = -g;
        }
        if let Some(mask) = allowed {
            let big = 1e6 * (1.0 + max_abs);
            for (idx, &ok) in mask.iter().enumerate() {
                if !ok {
                    cost.data_mut()[idx] += big;
                }
            }
        }
        let lp = solve_min_transport(&cost, a, b, None)?;
        if !lp.optimal {
            return Err(Error::NotConverged("frank-wolfe inner LP hit pivot cap".into()));
        }
        if let Some(mask) = allowed {
            let off_face: f64 = lp
                .plan
                .data()
                .iter()
                .zip(mask)
                .filter(|(_, &ok)| !ok)
                .map(|(&v, _)| v)
                .sum();
            if off_face > 1e-9 {
                return Err(Error::Numerical(format!(
                    "restricted LP placed mass {off_face:.3e} outside the optimal face"
                )));
            }
        }
        let vertex = lp.plan.data();
        gap = fsum(grad.iter().zip(vertex).zip(&mass).map(|((g, s), x)| g * (s - x)));
        if gap < FW_GAP_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        let direction: Vec<f64> = vertex.iter().zip(&mass).map(|(s, x)| s - x).collect();
        let blend_at = |gamma: f64, out: &mut Vec<f64>| {
            out.clear();
            out.extend(mass.iter().zip(&direction).map(|(x, d)| x + gamma * d));
        };
        let mut scratch = Vec::with_capacity(mass.len());
        let scheduled = 2.0 / (iterations as f64 + 2.0);
        blend_at(scheduled, &mut scratch);
        let f_scheduled = objective(&scratch)?;
        let (g_ls, f_ls) = line_search(|g| {
            let mut tmp = Vec::with_capacity(mass.len());
            tmp.extend(mass.iter().zip(&direction).map(|(x, d)| x + g * d));
            objective(&tmp).unwrap_or(f64::NEG_INFINITY)
        });
        let (gamma, f_new) =
            if f_ls > f_scheduled { (g_ls, f_ls) } else { (scheduled, f_scheduled) };
        // The subgradient gap overestimates suboptimality exactly at kink
        // minimizers of the piecewise-linear d_W, so a stationary objective
        // is the stopping signal there: the line search probed the whole
        // segment and found nothing better, and the state is deterministic,
        // so later iterations cannot differ.
        if f_new <= best + 1e-13 * (1.0 + best.abs()) {
            break;
        }
        best = f_new;
        blend_at(gamma, &mut scratch);
        std::mem::swap(&mut mass, &mut scratch);
    }

    Ok(FwState { mass, iterations, gap, converged })
}

/// Maximize `scale·W(θ,μ) - ε·H(μ)` over the couplings of `problem`'s
/// marginals. Strictly concave, so the maximizer is unique; the subgradient
/// of `H` at `μ` is `2·d_W(μ,ν)·f*` with `f*` an optimal Kantorovich
/// potential of the `d_W` dual.
pub fn solve_penalized(
    problem: &TransportProblem,
    reference: &Coupling,
    metric: &GroundMetric,
    eps: f64,
    scale: f64,
) -> Result<SolveReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("penalty eps must be positive, got {eps}")));
    }
    if !scale.is_finite() {
        return Err(Error::invalid("scale must be finite"));
    }
    reference.validate_feasible(&problem.source, &problem.target)?;
    let cells = problem.bins() * problem.levels();
    if metric.len() != cells {
        return Err(Error::Dimension(format!(
            "metric covers {} points but the problem has {cells} cells",
            metric.len()
        )));
    }

    let warm = solve_max_transport(problem)?;
    let ref_mass = reference.flat_masses();
    let welfare = problem.welfare.data().to_vec();

    let state = frank_wolfe(
        problem.source.masses(),
        problem.target.masses(),
        warm.coupling.mass().data().to_vec(),
        None,
        |mass| {
            let w1 = wasserstein1_masses(mass, &ref_mass, metric)?;
            Ok(welfare
                .iter()
                .zip(&w1.potential)
                .map(|(w, f)| scale * w - eps * 2.0 * w1.distance * f)
                .collect())
        },
        |mass| {
            let w1 = wasserstein1_masses(mass, &ref_mass, metric)?;
            let lin = fsum(welfare.iter().zip(mass).map(|(w, x)| w * x));
            Ok(scale * lin - eps * w1.distance.powi(2))
        },
    )?;

    let coupling = Coupling::new(Table::from_flat(problem.bins(), problem.levels(), state.mass)?)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let value = problem.objective(&coupling);
    Ok(SolveReport {
        coupling,
        value,
        iterations: state.iterations,
        status: if state.converged { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        gap: Some(state.gap),
    })
}

/// The optimal face of the welfare LP via complementary slackness: a feasible
/// coupling attains the LP maximum iff it is supported on cells whose dual
/// slack is zero. Returns the LP value and the per-cell tightness mask.
pub fn optimal_face(problem: &TransportProblem) -> Result<(SolveReport, Vec<bool>)> {
    let mut cost = problem.welfare.clone();
    for c in cost.data_mut() {
        *c = -*c;
    }
    let sol = solve_min_transport(&cost, problem.source.masses(), problem.target.masses(), None)?;
    if !sol.optimal {
        return Err(Error::NotConverged("face LP hit pivot cap".into()));
    }
    let slack_tol = (1e-9f64).max(1e-12 * problem.welfare.max_abs());
    let (m, n) = (problem.bins(), problem.levels());
    let mut mask = vec![false; m * n];
    for i in 0..m {
        for j in 0..n {
            let slack = cost.get(i, j) - sol.u[i] - sol.v[j];
            mask[i * n + j] = slack <= slack_tol;
        }
    }
    let coupling = Coupling::new(sol.plan)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let value = problem.objective(&coupling);
    let report = SolveReport {
        coupling,
        value,
        iterations: sol.iterations,
        status: SolveStatus::Optimal,
        gap: None,
    };
    Ok((report, mask))
}

/// The unique H-minimizer over the optimal face `{μ feasible : W(μ) = max}`.
///
/// Two stages: the welfare LP pins the face, then Frank-Wolfe minimizes `H`
/// with every linear step restricted to the face.
pub fn minimal_h_selection(
    problem: &TransportProblem,
    reference: &Coupling,
    metric: &GroundMetric,
) -> Result<SelectionReport> {
    reference.validate_feasible(&problem.source, &problem.target)?;
    let cells = problem.bins() * problem.levels();
    if metric.len() != cells {
        return Err(Error::Dimension(format!(
            "metric covers {} points but the problem has {cells} cells",
            metric.len()
        )));
    }

    let (lp, mask) = optimal_face(problem)?;
    let ref_mass = reference.flat_masses();

    let state = frank_wolfe(
        problem.source.masses(),
        problem.target.masses(),
        lp.coupling.mass().data().to_vec(),
        Some(&mask),
        |mass| {
            // Minimizing H: feed -∇H as the maximization gradient.
            let w1 = wasserstein1_masses(mass, &ref_mass, metric)?;
            Ok(w1.potential.iter().map(|f| -2.0 * w1.distance * f).collect())
        },
        |mass| {
            let w1 = wasserstein1_masses(mass, &ref_mass, metric)?;
            Ok(-w1.distance.powi(2))
        },
    )?;

    let coupling = Coupling::new(Table::from_flat(problem.bins(), problem.levels(), state.mass)?)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let h = penalty_h(&coupling, reference, metric)?;
    Ok(SelectionReport {
        welfare: problem.objective(&coupling),
        coupling,
        h,
        gap: state.gap,
        iterations: state.iterations,
        status: if state.converged { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
    })
}
