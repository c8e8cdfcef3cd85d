//! Capacity-constrained treatment assignment via discrete optimal transport.
//!
//! A planner assigns a treatment to a population described by a discrete
//! covariate distribution, subject to a hard capacity constraint expressed as
//! a fixed treatment marginal. Feasible assignments are couplings of the two
//! marginals; maximizing welfare over couplings is a transportation LP, so
//! the constraint is satisfied by construction.
//!
//! The crate provides:
//! - [`transport`]: marginals, couplings, a transportation-simplex solver,
//!   Wasserstein-1 distance, and the squared-Wasserstein penalty machinery
//!   that selects a unique coupling from a degenerate optimal face;
//! - [`welfare`]: censored conditional-mean welfare, the robust (maxmin)
//!   utility and its directional derivatives;
//! - [`tobit`]: censored-regression likelihood, Newton MLE, observed
//!   information, and Gaussian quasi-posterior sampling;
//! - [`rules`]: the oracle, plug-in, and ex-post Bayes assignment rules with
//!   welfare-regret evaluation;
//! - [`sim`]: a seeded, parallel Monte Carlo harness estimating local
//!   asymptotic risk curves for both rules;
//! - [`io`]: CSV/JSON formats for datasets, fits, couplings, and results.

pub mod error;
pub mod io;
pub mod normal;
pub mod rules;
pub mod sim;
pub mod sum;
pub mod table;
pub mod tobit;
pub mod transport;
pub mod welfare;

pub use error::{Error, Result};
pub use table::Table;
