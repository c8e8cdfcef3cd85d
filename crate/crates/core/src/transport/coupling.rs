//! Joint mass tables with fixed marginals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::fsum;
use crate::table::Table;
use crate::transport::marginal::DiscreteMarginal;

/// Tolerance at which row/column sums must match the prescribed marginals.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A joint distribution over `bins x levels`. Row sums reproduce the source
/// marginal (the covariate distribution) and column sums the target marginal
/// (the capacity distribution), which is what encodes the capacity constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    mass: Table,
}

impl Coupling {
    pub fn new(mass: Table) -> Result<Self> {
        if !mass.all_finite() {
            return Err(Error::invalid("coupling mass has non-finite entries"));
        }
        if mass.data().iter().any(|&v| v < -1e-12) {
            return Err(Error::invalid("coupling mass has negative entries"));
        }
        Ok(Coupling { mass })
    }

    /// The independent coupling `source ⊗ target`.
    pub fn independent(source: &DiscreteMarginal, target: &DiscreteMarginal) -> Self {
        let mut mass = Table::zeros(source.len(), target.len());
        for i in 0..source.len() {
            for j in 0..target.len() {
                mass.set(i, j, source.mass(i) * target.mass(j));
            }
        }
        Coupling { mass }
    }

    pub fn bins(&self) -> usize {
        self.mass.rows()
    }

    pub fn levels(&self) -> usize {
        self.mass.cols()
    }

    pub fn mass(&self) -> &Table {
        &self.mass
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass.get(i, j)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.bins())
            .map(|i| fsum((0..self.levels()).map(|j| self.mass.get(i, j))))
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.levels())
            .map(|j| fsum((0..self.bins()).map(|i| self.mass.get(i, j))))
            .collect()
    }

    /// Worst marginal violation against the prescribed (source, target) pair.
    pub fn marginal_error(&self, source: &DiscreteMarginal, target: &DiscreteMarginal) -> f64 {
        let mut err: f64 = 0.0;
        for (rs, &m) in self.row_sums().iter().zip(source.masses()) {
            err = err.max((rs - m).abs());
        }
        for (cs, &m) in self.col_sums().iter().zip(target.masses()) {
            err = err.max((cs - m).abs());
        }
        err
    }

    /// Checks both marginal invariants to [`FEASIBILITY_TOL`].
    pub fn validate_feasible(
        &self,
        source: &DiscreteMarginal,
        target: &DiscreteMarginal,
    ) -> Result<()> {
        if self.bins() != source.len() || self.levels() != target.len() {
            return Err(Error::Dimension(format!(
                "coupling is {}x{} but marginals are {}x{}",
                self.bins(),
                self.levels(),
                source.len(),
                target.len()
            )));
        }
        let err = self.marginal_error(source, target);
        if err > FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "coupling violates marginals by {err:.3e} (tol {FEASIBILITY_TOL:.0e})"
            )));
        }
        Ok(())
    }

    /// Conditional assignment probability μ(level | bin); zero-mass bins get 0.
    pub fn conditional(&self, i: usize, j: usize, source: &DiscreteMarginal) -> f64 {
        let m = source.mass(i);
        if m > 0.0 {
            self.get(i, j) / m
        } else {
            0.0
        }
    }

    /// Flattens the mass table to a vector over the product support,
    /// row-major (bin-major), matching [`crate::transport::metric::product_metric`].
    pub fn flat_masses(&self) -> Vec<f64> {
        self.mass.data().to_vec()
    }

    /// Total absolute mass difference against another coupling of equal shape.
    pub fn mass_deviation(&self, other: &Coupling) -> f64 {
        assert_eq!(self.bins(), other.bins());
        assert_eq!(self.levels(), other.levels());
        fsum(
            self.mass
                .data()
                .iter()
                .zip(other.mass.data())
                .map(|(a, b)| (a - b).abs()),
        )
    }

    /// Convex combination `(1-t)·self + t·other`.
    pub fn blend(&self, other: &Coupling, t: f64) -> Coupling {
        assert_eq!(self.bins(), other.bins());
        assert_eq!(self.levels(), other.levels());
        let mut mass = self.mass.clone();
        for (a, &b) in mass.data_mut().iter_mut().zip(other.mass.data()) {
            *a = (1.0 - t) * *a + t * b;
        }
        Coupling { mass }
    }
}
