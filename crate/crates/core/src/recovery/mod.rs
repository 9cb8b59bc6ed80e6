//! Orbit recovery from moments.
//!
//! * [`lsq`]: weighted least-squares moment matching over a box, for any
//!   finite-support cyclic law and for the identity group.
//! * [`bispectrum`]: closed-form frequency marching for uniform `Z_L`, fed
//!   either by MRA Fourier invariants or by MTD autocorrelations.
//! * [`rotation`]: steerable-coefficient recovery from rotation invariants.

pub mod bispectrum;
pub mod lsq;
pub mod rotation;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{orbit_mse, GroupKind, Signal};

pub use bispectrum::{invert_bispectrum, mtd_fourier_invariants, recover_bispectrum_mtd};
pub use lsq::{moment_match_lsq, recover_identity_group, residual_and_gradient, MomentObjective};
pub use rotation::{recover_rotation_coeffs, rotation_invariants, RotationInvariants};

/// How per-entry residuals are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_d` on every entry of order `d`.
    #[default]
    Uniform,
    /// `w_d` divided by the pure-noise variance of the entry's product,
    /// relative to the order-1 variance.
    VarianceNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    /// Weights of orders 1, 2, 3.
    pub weights: [f64; 3],
    pub weight_mode: WeightMode,
    /// Random initializations (an extra spectral one is always tried).
    pub restarts: usize,
    /// Half-width `B` of the parameter box; `None` derives it from the data.
    pub box_bound: Option<f64>,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            weights: [1.0, 1.0, 1.0],
            weight_mode: WeightMode::Uniform,
            restarts: 20,
            box_bound: None,
            grad_tol: 1e-10,
            step_tol: 1e-15,
            max_iters: 5000,
            seed: 0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::MtdError;
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MtdError::config("moment weights must be finite and >= 0"));
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(MtdError::config("at least one moment weight must be positive"));
        }
        if self.restarts == 0 {
            return Err(MtdError::config("restarts must be >= 1"));
        }
        if let Some(b) = self.box_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(MtdError::config("box bound must be positive"));
            }
        }
        if !(self.grad_tol > 0.0 && self.step_tol >= 0.0 && self.max_iters > 0) {
            return Err(MtdError::config("invalid optimizer tolerances"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub x_hat: Signal,
    /// Final value of the moment-matching objective.
    pub residual: f64,
    /// Orbit-aligned RMSE, filled in by [`RecoveryResult::score`].
    pub orbit_rmse: Option<f64>,
    pub iterations: usize,
    /// Index of the winning initialization (0 is the spectral one).
    pub restart: usize,
    pub converged: bool,
    /// Half-width of the search box; `None` for closed-form methods.
    pub box_bound: Option<f64>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl RecoveryResult {
    /// Attach the orbit RMSE against a known truth.
    pub fn score(&mut self, truth: &Signal, kind: GroupKind) -> Result<f64> {
        let fit = orbit_mse(&self.x_hat, truth, kind)?;
        self.orbit_rmse = Some(fit.rmse());
        Ok(fit.rmse())
    }
}
