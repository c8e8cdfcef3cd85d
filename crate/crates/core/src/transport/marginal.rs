//! Finite probability distributions over labeled support points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MASS_SUM_TOL: f64 = 1e-12;

/// A labeled support point carrying its coordinate vector (e.g. `(age, sex)`
/// for a covariate bin, or a single treatment level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub label: String,
    pub coords: Vec<f64>,
}

impl SupportPoint {
    pub fn new(label: impl Into<String>, coords: Vec<f64>) -> Self {
        SupportPoint { label: label.into(), coords }
    }
}

/// A finite probability distribution over distinct labeled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    points: Vec<SupportPoint>,
    masses: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn new(points: Vec<SupportPoint>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::Dimension(format!(
                "{} support points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::invalid("marginal needs at least one support point"));
        }
        for (i, p) in points.iter().enumerate() {
            for q in &points[i + 1..] {
                if p.label == q.label {
                    return Err(Error::invalid(format!("duplicate support label '{}'", p.label)));
                }
            }
        }
        for (p, &m) in points.iter().zip(&masses) {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::invalid(format!("mass of '{}' is {m}", p.label)));
            }
        }
        let total: f64 = crate::sum::fsum(masses.iter().copied());
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(DiscreteMarginal { points, masses })
    }

    /// Two-point distribution over treatment levels {0, 1} with P(T=1) = p.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("bernoulli p must be in [0,1], got {p}")));
        }
        DiscreteMarginal::new(
            vec![SupportPoint::new("0", vec![0.0]), SupportPoint::new("1", vec![1.0])],
            vec![1.0 - p, p],
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn point(&self, i: usize) -> &SupportPoint {
        &self.points[i]
    }

    pub fn labels(&self) -> Vec<String> {
        self.points.iter().map(|p| p.label.clone()).collect()
    }
}
