//! Numerical tolerances shared by every module.
//!
//! The constants are the defaults; [`Tolerances`] bundles them so callers can
//! override individual values.

use serde::{Deserialize, Serialize};

/// Row sums of a stochastic matrix must be within this of one.
pub const ROW_SUM: f64 = 1e-12;
/// Relative detailed-balance defect accepted as reversible.
pub const REVERSIBILITY: f64 = 1e-10;
/// Absolute asymmetry accepted as symmetric.
pub const SYMMETRY: f64 = 1e-12;
/// Bound on `|pi^T P - pi^T|_inf` for a computed stationary distribution.
pub const STATIONARITY: f64 = 1e-10;
/// Relative spread allowed across random-target row sums.
pub const RANDOM_TARGET: f64 = 1e-9;
/// Per-target hitting-time residual, multiplied by `n`.
pub const HITTING_RESIDUAL: f64 = 1e-9;
/// Imaginary residue tolerated when summing a conjugate-closed spectrum.
pub const IMAGINARY_RESIDUE: f64 = 1e-9;
/// Relative step size at which the covariance recursion is declared converged.
pub const ORACLE: f64 = 1e-12;
/// Consistency residual for formation offsets.
pub const FORMATION_CONSISTENCY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub row_sum: f64,
    pub reversibility: f64,
    pub symmetry: f64,
    pub stationarity: f64,
    pub random_target: f64,
    pub hitting_residual: f64,
    pub imaginary_residue: f64,
    pub oracle: f64,
    pub formation_consistency: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            row_sum: ROW_SUM,
            reversibility: REVERSIBILITY,
            symmetry: SYMMETRY,
            stationarity: STATIONARITY,
            random_target: RANDOM_TARGET,
            hitting_residual: HITTING_RESIDUAL,
            imaginary_residue: IMAGINARY_RESIDUE,
            oracle: ORACLE,
            formation_consistency: FORMATION_CONSISTENCY,
        }
    }
}
