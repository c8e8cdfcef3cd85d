//! Discrete optimal transport: marginals, couplings, the transportation
//! simplex, Wasserstein-1 distance, and the squared-Wasserstein penalty
//! machinery used to select among degenerate optima.

pub mod coupling;
pub mod marginal;
pub mod metric;
pub mod penalty;
pub mod problem;
pub mod simplex;
pub mod wasserstein;

pub use coupling::{Coupling, FEASIBILITY_TOL};
pub use marginal::{DiscreteMarginal, SupportPoint};
pub use metric::{product_metric, CovariateScaling, GroundMetric};
pub use penalty::{
    coupling_distance, minimal_h_selection, optimal_face, penalty_h, solve_penalized,
    SelectionReport, FW_GAP_TOL, FW_MAX_ITERS,
};
pub use problem::{solve_max_transport, solve_min_welfare, SolveReport, SolveStatus, TransportProblem};
pub use wasserstein::{wasserstein1, wasserstein1_masses, WassersteinSolution};
