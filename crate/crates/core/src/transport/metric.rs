//! Ground metrics over finite supports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Table;
use crate::transport::marginal::DiscreteMarginal;

/// Pairwise distances over a shared index space of support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    distances: Table,
}

impl GroundMetric {
    pub fn new(distances: Table) -> Result<Self> {
        let n = distances.rows();
        if distances.cols() != n {
            return Err(Error::Dimension(format!(
                "metric table must be square, got {}x{}",
                n,
                distances.cols()
            )));
        }
        for i in 0..n {
            if distances.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("metric diagonal must be zero at {i}")));
            }
            for j in 0..n {
                let d = distances.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::invalid(format!("distance ({i},{j}) is {d}")));
                }
                if (d - distances.get(j, i)).abs() > 1e-12 {
                    return Err(Error::invalid(format!("metric not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(GroundMetric { distances })
    }

    pub fn len(&self) -> usize {
        self.distances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.rows() == 0
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances.get(i, j)
    }

    pub fn table(&self) -> &Table {
        &self.distances
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.distances.max_abs()
    }
}

/// How covariate coordinates are scaled inside [`product_metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateScaling {
    /// Divide each coordinate by its standard deviation under the source masses.
    Standardized,
    /// Use raw coordinates.
    Raw,
}

/// Default ground metric on the product support `bins x levels`, indexed
/// row-major (bin-major):
/// `d((x,t),(x',t')) = ||scale(x) - scale(x')||_2 + 1{t != t'}`.
///
/// The sum of two metrics, so symmetry, zero diagonal, and the triangle
/// inequality hold by construction.
pub fn product_metric(
    bins: &DiscreteMarginal,
    levels: &DiscreteMarginal,
    scaling: CovariateScaling,
) -> Result<GroundMetric> {
    let dim = bins.point(0).coords.len();
    if bins.points().iter().any(|p| p.coords.len() != dim) {
        return Err(Error::Dimension("bins must share a coordinate dimension".into()));
    }
    let scale = match scaling {
        CovariateScaling::Raw => vec![1.0; dim],
        CovariateScaling::Standardized => {
            let mut sd = Vec::with_capacity(dim);
            for c in 0..dim {
                let mean: f64 = bins
                    .points()
                    .iter()
                    .zip(bins.masses())
                    .map(|(p, &m)| m * p.coords[c])
                    .sum();
                let var: f64 = bins
                    .points()
                    .iter()
                    .zip(bins.masses())
                    .map(|(p, &m)| m * (p.coords[c] - mean).powi(2))
                    .sum();
                sd.push(if var > 1e-15 { var.sqrt() } else { 1.0 });
            }
            sd
        }
    };

    let nb = bins.len();
    let nl = levels.len();
    let n = nb * nl;
    let mut d = Table::zeros(n, n);
    for bi in 0..nb {
        for li in 0..nl {
            for bj in 0..nb {
                for lj in 0..nl {
                    let mut cov = 0.0;
                    for c in 0..dim {
                        let diff = (bins.point(bi).coords[c] - bins.point(bj).coords[c]) / scale[c];
                        cov += diff * diff;
                    }
                    let t = if li == lj { 0.0 } else { 1.0 };
                    d.set(bi * nl + li, bj * nl + lj, cov.sqrt() + t);
                }
            }
        }
    }
    GroundMetric::new(d)
}
