//! Wasserstein-1 distance between finite distributions on a shared support.

use crate::error::{Error, Result};
use crate::transport::marginal::DiscreteMarginal;
use crate::transport::metric::GroundMetric;
use crate::transport::simplex::solve_min_transport;

/// Distance plus the dual potential on the source side, which is a
/// subgradient of `masses -> d_W(masses, nu)` and drives the Frank-Wolfe
/// penalty steps.
#[derive(Debug, Clone)]
pub struct WassersteinSolution {
    pub distance: f64,
    /// Source-side Kantorovich potential, one entry per support point.
    pub potential: Vec<f64>,
}

/// Min-cost transport value between two mass vectors over the metric's
/// support (index `i` of `mu` and index `j` of `nu` are `metric.distance(i, j)`
/// apart).
pub fn wasserstein1_masses(
    mu: &[f64],
    nu: &[f64],
    metric: &GroundMetric,
) -> Result<WassersteinSolution> {
    if mu.len() != metric.len() || nu.len() != metric.len() {
        return Err(Error::Dimension(format!(
            "marginals with {} and {} points do not match metric support of {}",
            mu.len(),
            nu.len(),
            metric.len()
        )));
    }
    let sol = solve_min_transport(metric.table(), mu, nu, None)?;
    if !sol.optimal {
        return Err(Error::NotConverged("wasserstein transport hit pivot cap".into()));
    }
    // Clamp the tiny negative round-off a vertex solve can leave behind.
    Ok(WassersteinSolution { distance: sol.value.max(0.0), potential: sol.u })
}

/// Wasserstein-1 distance between two marginals on the same support.
pub fn wasserstein1(
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    metric: &GroundMetric,
) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Dimension(format!(
            "supports differ: {} vs {} points",
            mu.len(),
            nu.len()
        )));
    }
    for (p, q) in mu.points().iter().zip(nu.points()) {
        if p.label != q.label {
            return Err(Error::Dimension(format!(
                "support mismatch: '{}' vs '{}' (embed both in a common metric support first)",
                p.label, q.label
            )));
        }
    }
    Ok(wasserstein1_masses(mu.masses(), nu.masses(), metric)?.distance)
}
