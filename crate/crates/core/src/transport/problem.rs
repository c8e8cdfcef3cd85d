//! Welfare-maximizing transport problems and solve reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::fsum;
use crate::table::Table;
use crate::transport::coupling::Coupling;
use crate::transport::marginal::DiscreteMarginal;
use crate::transport::simplex::solve_min_transport;

/// A maximization instance: transport the source (covariate) marginal onto
/// the target (capacity) marginal, collecting `welfare[bin][level]` per unit
/// of mass placed on a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProblem {
    pub welfare: Table,
    pub source: DiscreteMarginal,
    pub target: DiscreteMarginal,
}

impl TransportProblem {
    pub fn new(welfare: Table, source: DiscreteMarginal, target: DiscreteMarginal) -> Result<Self> {
        if welfare.rows() != source.len() || welfare.cols() != target.len() {
            return Err(Error::Dimension(format!(
                "welfare is {}x{} but marginals have {} and {} points",
                welfare.rows(),
                welfare.cols(),
                source.len(),
                target.len()
            )));
        }
        if !welfare.all_finite() {
            return Err(Error::invalid("welfare matrix has non-finite entries"));
        }
        Ok(TransportProblem { welfare, source, target })
    }

    pub fn bins(&self) -> usize {
        self.source.len()
    }

    pub fn levels(&self) -> usize {
        self.target.len()
    }

    /// `Σ w·μ` for a coupling of matching shape.
    pub fn objective(&self, coupling: &Coupling) -> f64 {
        fsum(
            self.welfare
                .data()
                .iter()
                .zip(coupling.mass().data())
                .map(|(w, m)| w * m),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    IterationLimit,
}

/// Outcome of a transport solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub coupling: Coupling,
    /// Objective `Σ w·μ` at the returned coupling.
    pub value: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Frank-Wolfe duality gap when the solve was penalized; `None` for
    /// plain LP solves.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap: Option<f64>,
}

/// Maximize `Σ w·μ` over couplings of (source, target).
///
/// The returned coupling is a feasible vertex; `status` is
/// `IterationLimit` (never a silently wrong answer) if the pivot cap is hit.
pub fn solve_max_transport(problem: &TransportProblem) -> Result<SolveReport> {
    let mut cost = problem.welfare.clone();
    for c in cost.data_mut() {
        *c = -*c;
    }
    let sol = solve_min_transport(&cost, problem.source.masses(), problem.target.masses(), None)?;
    let coupling = Coupling::new(sol.plan)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let value = problem.objective(&coupling);
    Ok(SolveReport {
        coupling,
        value,
        iterations: sol.iterations,
        status: if sol.optimal { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        gap: None,
    })
}

/// Minimize `Σ w·μ` (used for worst-case regret baselines).
pub fn solve_min_welfare(problem: &TransportProblem) -> Result<SolveReport> {
    let sol = solve_min_transport(
        &problem.welfare,
        problem.source.masses(),
        problem.target.masses(),
        None,
    )?;
    let coupling = Coupling::new(sol.plan)?;
    coupling.validate_feasible(&problem.source, &problem.target)?;
    let value = problem.objective(&coupling);
    Ok(SolveReport {
        coupling,
        value,
        iterations: sol.iterations,
        status: if sol.optimal { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        gap: None,
    })
}
