//! Monte Carlo sweeps over `(sigma, N, M)` grids.
//!
//! A sweep is a grid of cells (one per `sigma` and size), each run for a
//! number of independent trials. Every trial draws its randomness from a
//! seed derived from the base seed and its `(cell, trial)` index, so rows
//! are reproducible one by one and independent of scheduling.

mod compare;
mod complexity;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::autocorr::check_gamma;
use crate::error::{MtdError, Result};
use crate::generator::{PlacementStrategy, SeparationMode};
use crate::model::{GroupDistribution, GroupKind, Signal, DFT_FLOOR};
use crate::recovery::RecoveryConfig;
use crate::rng::{keyed_rng, tag};

pub use compare::{mra_vs_mtd_comparison, PairedCell, PairedRecord, PairedTable};
pub use complexity::{estimate_sample_complexity, SampleComplexity, SearchBudget};
pub use sweep::{
    fit_cells, fit_scaling_exponent, run_sweep, run_trial, Axis, CellSummary, SlopeFit,
    SweepSummary, SweepTable, TrialRecord, CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// MTD with shifts uniform on `Z_L`.
    ZlUniform,
    /// MTD with shifts drawn from `weights`.
    ZlCategorical,
    /// MTD with untransformed copies.
    Identity,
    /// `N` independent MRA samples under the uniform law, recovered from
    /// their Fourier invariants.
    MraBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lsq,
    Bispectrum,
    Identity,
}

impl std::str::FromStr for Method {
    type Err = MtdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsq" => Ok(Method::Lsq),
            "bispectrum" => Ok(Method::Bispectrum),
            "identity" => Ok(Method::Identity),
            other => Err(MtdError::config(format!("unknown method `{other}`"))),
        }
    }
}

fn default_trials() -> usize {
    25
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_separation() -> SeparationMode {
    SeparationMode::WellSeparated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub len: usize,
    /// Explicit signal; drawn from `base_seed` when absent.
    #[serde(default)]
    pub signal: Option<Vec<f64>>,
    /// Shift probabilities for the categorical model.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub gamma: f64,
    /// Sizes as observation lengths `M` (with `N = round(gamma M)`) ...
    #[serde(default)]
    pub m_grid: Vec<usize>,
    /// ... or as occurrence counts `N` (with `M = round(N / gamma)`).
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Target orbit-MSE for sample-complexity searches.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub method: Method,
    #[serde(default = "default_separation")]
    pub separation: SeparationMode,
    #[serde(default)]
    pub placement: PlacementStrategy,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    /// Root of every derived seed; the command line supplies it when absent.
    #[serde(default)]
    pub base_seed: u64,
    /// Record wall-clock time per trial; off by default so output files are
    /// reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

/// Parameters of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub model: ModelKind,
    pub signal: Signal,
    pub rho: GroupDistribution,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub method: Method,
    pub separation: SeparationMode,
    pub placement: PlacementStrategy,
    pub recovery: RecoveryConfig,
    pub timing: bool,
}

impl Cell {
    pub fn gamma(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn group_kind(&self) -> GroupKind {
        self.rho.group_kind()
    }
}

impl SweepConfig {
    /// A minimal configuration with library defaults.
    pub fn new(model: ModelKind, len: usize, method: Method, base_seed: u64) -> Self {
        SweepConfig {
            model,
            len,
            signal: None,
            weights: None,
            sigmas: vec![1.0],
            gamma: 0.2,
            m_grid: Vec::new(),
            n_grid: Vec::new(),
            trials: default_trials(),
            epsilon: default_epsilon(),
            method,
            separation: default_separation(),
            placement: PlacementStrategy::default(),
            recovery: RecoveryConfig::default(),
            base_seed,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(MtdError::config("len must be >= 2"));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(MtdError::config("sigmas must be a non-empty list of finite values >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(MtdError::config(format!(
                "gamma = N/M must satisfy 0 < gamma < 1, got {}",
                self.gamma
            )));
        }
        if self.model != ModelKind::MraBaseline {
            check_gamma(self.gamma).map_err(|e| MtdError::config(e.to_string()))?;
        }
        match (self.m_grid.is_empty(), self.n_grid.is_empty()) {
            (true, true) => return Err(MtdError::config("one of m_grid or n_grid is required")),
            (false, false) => {
                return Err(MtdError::config("give either m_grid or n_grid, not both"))
            }
            _ => {}
        }
        if self.m_grid.iter().chain(&self.n_grid).any(|v| *v == 0) {
            return Err(MtdError::config("grid sizes must be positive"));
        }
        if self.trials < 3 {
            return Err(MtdError::config("trials must be >= 3"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(MtdError::config("epsilon must be positive"));
        }
        if let Some(s) = &self.signal {
            if s.len() != self.len {
                return Err(MtdError::config(format!(
                    "signal has {} entries but len is {}",
                    s.len(),
                    self.len
                )));
            }
        }
        match (self.model, self.method) {
            (ModelKind::ZlUniform, Method::Lsq | Method::Bispectrum)
            | (ModelKind::ZlCategorical, Method::Lsq)
            | (ModelKind::Identity, Method::Lsq | Method::Identity)
            | (ModelKind::MraBaseline, Method::Bispectrum) => {}
            (model, method) => {
                return Err(MtdError::config(format!(
                    "method {method:?} does not apply to model {model:?}"
                )))
            }
        }
        if self.model == ModelKind::ZlCategorical {
            let w = self
                .weights
                .as_ref()
                .ok_or_else(|| MtdError::config("the categorical model needs weights"))?;
            if w.len() != self.len {
                return Err(MtdError::config("categorical weights must have len entries"));
            }
            GroupDistribution::categorical(w.clone()).map_err(|e| MtdError::config(e.to_string()))?;
        }
        self.recovery.validate()?;
        if self.model != ModelKind::MraBaseline {
            let gap = self.separation.min_gap(self.len);
            for (n, m) in self.sizes() {
                if n == 0 || n >= m || n * gap > self.len * m {
                    return Err(MtdError::capacity(format!(
                        "N = {n} occurrences with spacing {gap} do not fit in M = {m} windows of \
                         length {}",
                        self.len
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(N, M)` for every size in the grid.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        if !self.m_grid.is_empty() {
            self.m_grid
                .iter()
                .map(|&m| (((self.gamma * m as f64).round() as usize).max(1), m))
                .collect()
        } else {
            self.n_grid
                .iter()
                .map(|&n| (n, (n as f64 / self.gamma).round() as usize))
                .collect()
        }
    }

    /// The signal used by every trial.
    pub fn signal(&self) -> Result<Signal> {
        match &self.signal {
            Some(v) => Signal::new(v.clone()).map_err(|e| MtdError::config(e.to_string())),
            None => {
                let mut rng = keyed_rng(self.base_seed, &[tag::SIGNAL]);
                Signal::random_generic(self.len, DFT_FLOOR, &mut rng)
            }
        }
    }

    pub fn distribution(&self) -> Result<GroupDistribution> {
        Ok(match self.model {
            ModelKind::ZlUniform | ModelKind::MraBaseline => {
                GroupDistribution::UniformCyclic { len: self.len }
            }
            ModelKind::ZlCategorical => {
                GroupDistribution::categorical(self.weights.clone().unwrap_or_default())?
            }
            ModelKind::Identity => GroupDistribution::PointMassIdentity,
        })
    }

    pub(crate) fn cell_for(&self, index: usize, sigma: f64, n: usize, m: usize) -> Result<Cell> {
        Ok(Cell {
            index,
            model: self.model,
            signal: self.signal()?,
            rho: self.distribution()?,
            sigma,
            n,
            m,
            method: self.method,
            separation: self.separation,
            placement: self.placement,
            recovery: self.recovery.clone(),
            timing: self.timing,
        })
    }

    /// Cells in `sigma`-major order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let sizes = self.sizes();
        let mut cells = Vec::with_capacity(self.sigmas.len() * sizes.len());
        for &sigma in &self.sigmas {
            for &(n, m) in &sizes {
                cells.push(self.cell_for(cells.len(), sigma, n, m)?);
            }
        }
        Ok(cells)
    }
}
