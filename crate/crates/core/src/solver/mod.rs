//! Per-segment sparse decoders: basis pursuit (the production decoder) and
//! two small-scale cross-checks, orthogonal matching pursuit and exhaustive
//! l0 search.

mod bp;
mod l0;
pub(crate) mod linalg;
mod omp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{norm2, DenseMatrix, Vector};

pub use bp::basis_pursuit;
pub use l0::{l0_bruteforce, L0_MAX_COLUMNS};
pub use omp::omp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisPursuitConfig {
    pub max_iterations: usize,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    /// Augmented-Lagrangian weight `rho`, applied to the problem rescaled to
    /// `||y||_2 = 1`; the soft-threshold level is `1 / rho`.
    pub penalty: f64,
    /// ADMM over-relaxation factor in `(0, 2)`; 1 disables relaxation.
    pub relaxation: f64,
    /// Periodically refit on the current support and stop early once the
    /// refit passes an exact optimality check.
    pub polish: bool,
}

impl Default for BasisPursuitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            abs_tolerance: 1e-6,
            rel_tolerance: 1e-5,
            penalty: 20.0,
            relaxation: 1.6,
            polish: true,
        }
    }
}

impl BasisPursuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.abs_tolerance > 0.0 && self.rel_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidArgument("penalty must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidArgument("relaxation must lie in (0, 2)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterationsReached,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterationsReached => "max_iterations_reached",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solution: Vector,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `||A theta - y||_2 / max(1, ||y||_2)`.
    pub constraint_residual: f64,
}

impl SolveResult {
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.solution
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn constraint_residual(a: &DenseMatrix, theta: &[f64], y: &[f64]) -> f64 {
    let mut r = vec![0.0; y.len()];
    a.matvec_into(theta, &mut r);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    norm2(&r) / norm2(y).max(1.0)
}

fn check_measurements(op: &'static str, a: &DenseMatrix, y: &[f64]) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            op,
            left: format!("{}x{}", a.rows(), a.cols()),
            right: format!("measurements of length {}", y.len()),
        });
    }
    Ok(())
}
