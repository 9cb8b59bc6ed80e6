use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

use super::{Cell, Method, ModelKind, SweepConfig};
use crate::autocorr::{empirical_autocorr_streaming, mra_invariant_features};
use crate::error::{MtdError, Result};
use crate::fourier::FourierInvariants;
use crate::generator::{generate_mra, make_placement, MtdSynthesizer};
use crate::model::{orbit_mse, GroupKind, Signal, DFT_FLOOR};
use crate::recovery::{
    invert_bispectrum, moment_match_lsq, recover_bispectrum_mtd, recover_identity_group,
};
use crate::rng::{derive_seed, keyed_rng, tag};
use crate::stats::{self, LineFit};

pub const CSV_HEADER: &str = "sigma,N,M,gamma,seed,rmse,residual,wall_ms,converged";

/// One pipeline run. A failed trial keeps its row with `rmse = NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Orbit-aligned relative RMSE.
    pub rmse: f64,
    pub residual: f64,
    pub wall_ms: u64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Squared distance between estimated invariants and those of `x_hat`.
fn feature_residual(features: &FourierInvariants, x_hat: &Signal) -> f64 {
    let fit = FourierInvariants::of_signal(x_hat.values());
    let mut r = (features.mean - fit.mean).powi(2);
    r += features
        .power_spectrum
        .iter()
        .zip(&fit.power_spectrum)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>();
    r += features
        .bispectrum
        .iter()
        .zip(&fit.bispectrum)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>();
    r
}

fn pipeline(cell: &Cell, seed: u64) -> Result<(f64, f64, bool)> {
    let x = &cell.signal;
    if cell.model == ModelKind::MraBaseline {
        let set = generate_mra(x, &cell.rho, cell.n, cell.sigma, seed)?;
        let features = mra_invariant_features(&set)?;
        let x_hat = invert_bispectrum(&features, DFT_FLOOR)?;
        let rmse = orbit_mse(&x_hat, x, GroupKind::Cyclic)?.rmse();
        return Ok((rmse, feature_residual(&features, &x_hat), true));
    }
    let mut rng = keyed_rng(seed, &[tag::PLACEMENT]);
    let plan = make_placement(
        x.len(),
        cell.m,
        cell.n,
        cell.separation,
        cell.placement,
        &mut rng,
    )?;
    let gamma = plan.gamma();
    let synth = MtdSynthesizer::new(x, &cell.rho, plan, cell.sigma, seed)?;
    let moments = empirical_autocorr_streaming(&synth, cell.sigma, 3)?;
    let mut recovery = cell.recovery.clone();
    recovery.seed = derive_seed(seed, &[tag::RESTART]);
    let mut result = match cell.method {
        Method::Lsq => moment_match_lsq(&moments, &cell.rho, gamma, cell.sigma, &recovery)?,
        Method::Bispectrum => recover_bispectrum_mtd(&moments, gamma, cell.sigma)?,
        Method::Identity => recover_identity_group(&moments, gamma, cell.sigma, &recovery)?,
    };
    let rmse = result.score(x, cell.group_kind())?;
    Ok((rmse, result.residual, result.converged))
}

/// Run the full pipeline once: generate, compute moments, recover, score.
/// The ground truth is only used for the final score.
pub fn run_trial(cell: &Cell, trial: usize, seed: u64) -> TrialRecord {
    let start = Instant::now();
    let outcome = pipeline(cell, seed);
    let wall_ms = if cell.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let (rmse, residual, converged, error) = match outcome {
        Ok((r, res, c)) => (r, res, c, None),
        Err(e) => (f64::NAN, f64::NAN, false, Some(e.to_string())),
    };
    TrialRecord {
        cell: cell.index,
        trial,
        sigma: cell.sigma,
        n: cell.n,
        m: cell.m,
        gamma: cell.gamma(),
        seed,
        rmse,
        residual,
        wall_ms,
        converged,
        error,
    }
}

/// Seed of row `(cell, trial)`.
pub(crate) fn row_seed(base: u64, cell: usize, trial: usize) -> u64 {
    derive_seed(base, &[tag::TRIAL, cell as u64, trial as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Sigma,
    M,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub trials: usize,
    pub failures: usize,
    /// Failed trials rank as `+inf`.
    pub median_rmse: f64,
    pub median_rmse_se: f64,
    pub median_residual: f64,
}

impl CellSummary {
    fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Sigma => self.sigma,
            Axis::M => self.m as f64,
            Axis::N => self.n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub axis: Axis,
    /// The other coordinate, held fixed: `N` for a `sigma` fit, `sigma`
    /// otherwise.
    pub fixed: f64,
    pub fit: LineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub config: SweepConfig,
    pub rows: Vec<TrialRecord>,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.sigma),
                r.n,
                r.m,
                fmt_f64(r.gamma),
                r.seed,
                fmt_f64(r.rmse),
                fmt_f64(r.residual),
                r.wall_ms,
                r.converged
            );
        }
        out
    }

    /// Per-cell medians, in cell order.
    pub fn cell_summaries(&self) -> Vec<CellSummary> {
        let mut out: Vec<CellSummary> = Vec::new();
        let mut start = 0;
        while start < self.rows.len() {
            let cell = self.rows[start].cell;
            let end = start
                + self.rows[start..]
                    .iter()
                    .take_while(|r| r.cell == cell)
                    .count();
            let rows = &self.rows[start..end];
            let rmse: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
            let residual: Vec<f64> = rows.iter().map(|r| r.residual).collect();
            out.push(CellSummary {
                cell,
                sigma: rows[0].sigma,
                n: rows[0].n,
                m: rows[0].m,
                gamma: rows[0].gamma,
                trials: rows.len(),
                failures: rows.iter().filter(|r| r.failed()).count(),
                median_rmse: stats::median(&rmse),
                median_rmse_se: stats::median_standard_error(&rmse),
                median_residual: stats::median(&residual),
            });
            start = end;
        }
        out
    }

    /// Cell medians plus every slope that has at least three points: RMSE
    /// against `sigma` at each size, and against the size axis at each
    /// `sigma`.
    pub fn summary(&self) -> SweepSummary {
        let cells = self.cell_summaries();
        let size_axis = if self.config.m_grid.is_empty() {
            Axis::N
        } else {
            Axis::M
        };
        let mut slopes = Vec::new();
        let mut sizes: Vec<usize> = cells.iter().map(|c| c.n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for n in sizes {
            let group: Vec<CellSummary> = cells.iter().filter(|c| c.n == n).cloned().collect();
            if let Ok(fit) = fit_cells(&group, Axis::Sigma) {
                slopes.push(SlopeFit {
                    axis: Axis::Sigma,
                    fixed: n as f64,
                    fit,
                });
            }
        }
        let mut sigmas: Vec<f64> = cells.iter().map(|c| c.sigma).collect();
        sigmas.sort_by(f64::total_cmp);
        sigmas.dedup();
        for s in sigmas {
            let group: Vec<CellSummary> = cells.iter().filter(|c| c.sigma == s).cloned().collect();
            if let Ok(fit) = fit_cells(&group, size_axis) {
                slopes.push(SlopeFit {
                    axis: size_axis,
                    fixed: s,
                    fit,
                });
            }
        }
        SweepSummary { cells, slopes }
    }
}

/// OLS of `log(median RMSE)` on `log(axis)` over the given cells.
pub fn fit_cells(cells: &[CellSummary], axis: Axis) -> Result<LineFit> {
    let mut distinct: Vec<f64> = cells.iter().map(|c| c.axis_value(axis)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(MtdError::domain(format!(
            "a scaling fit needs at least 3 distinct {axis:?} values, got {}",
            distinct.len()
        )));
    }
    let mut xs = Vec::with_capacity(cells.len());
    let mut ys = Vec::with_capacity(cells.len());
    for c in cells {
        let a = c.axis_value(axis);
        if !(a > 0.0 && c.median_rmse > 0.0 && c.median_rmse.is_finite()) {
            return Err(MtdError::domain(format!(
                "cell {} has a non-positive axis value or median RMSE ({a}, {})",
                c.cell, c.median_rmse
            )));
        }
        xs.push(a.ln());
        ys.push(c.median_rmse.ln());
    }
    stats::ols(&xs, &ys).ok_or_else(|| MtdError::domain("degenerate scaling fit"))
}

pub fn fit_scaling_exponent(table: &SweepTable, axis: Axis) -> Result<LineFit> {
    fit_cells(&table.cell_summaries(), axis)
}

/// Run every `(cell, trial)` on the current rayon pool. Rows come back in
/// `(cell, trial)` order whatever the scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let trials = cfg.trials;
    let rows: Vec<TrialRecord> = (0..cells.len() * trials)
        .into_par_iter()
        .map(|i| {
            let (c, t) = (i / trials, i % trials);
            run_trial(&cells[c], t, row_seed(cfg.base_seed, c, t))
        })
        .collect();
    let table = SweepTable {
        config: cfg.clone(),
        rows,
    };
    for s in table.cell_summaries() {
        log::info!(
            "cell {}: sigma={} N={} M={} median rmse={:.4e} failures={}",
            s.cell,
            s.sigma,
            s.n,
            s.m,
            s.median_rmse,
            s.failures
        );
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Method, ModelKind};

    fn synthetic(axis_values: &[f64], rmse: impl Fn(f64) -> f64, axis: Axis) -> Vec<CellSummary> {
        axis_values
            .iter()
            .enumerate()
            .map(|(i, &v)| CellSummary {
                cell: i,
                sigma: if axis == Axis::Sigma { v } else { 1.0 },
                n: if axis == Axis::N { v as usize } else { 100 },
                m: if axis == Axis::M { v as usize } else { 1000 },
                gamma: 0.1,
                trials: 3,
                failures: 0,
                median_rmse: rmse(v),
                median_rmse_se: 0.0,
                median_residual: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_power_laws_give_exact_slopes() {
        let cells = synthetic(&[2.0, 3.0, 4.5, 6.75], |s| 7.0 * s.powi(3), Axis::Sigma);
        let fit = fit_cells(&cells, Axis::Sigma).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let cells = synthetic(&[1e3, 1e4, 1e5], |m| 2.0 * m.powf(-0.5), Axis::M);
        let fit = fit_cells(&cells, Axis::M).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_axes_are_rejected() {
        let cells = synthetic(&[2.0, 3.0], |s| s, Axis::Sigma);
        assert!(fit_cells(&cells, Axis::Sigma).is_err());
        let cells = synthetic(&[2.0, 3.0, 4.0], |_| 0.0, Axis::Sigma);
        assert!(fit_cells(&cells, Axis::Sigma).is_err());
    }

    fn small_config() -> SweepConfig {
        let mut cfg = SweepConfig::new(ModelKind::ZlUniform, 3, Method::Bispectrum, 7);
        cfg.signal = Some(vec![1.0, 2.0, 3.0]);
        cfg.m_grid = vec![2000];
        cfg.trials = 3;
        cfg
    }

    #[test]
    fn noise_free_trials_are_exact_and_reproducible() {
        let mut cfg = small_config();
        cfg.sigmas = vec![0.0];
        let cells = cfg.cells().unwrap();
        let a = run_trial(&cells[0], 0, 11);
        let b = run_trial(&cells[0], 0, 11);
        assert_eq!(a, b);
        assert!(a.rmse < 1e-8, "rmse {}", a.rmse);
    }

    #[test]
    fn sweeps_have_one_row_per_trial() {
        let mut cfg = small_config();
        cfg.sigmas = vec![1.0, 2.0];
        cfg.m_grid = vec![1000];
        cfg.trials = 5;
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 10);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 11);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn failed_trials_are_recorded() {
        // a constant signal has a vanishing spectrum away from zero
        let mut cfg = small_config();
        cfg.model = ModelKind::MraBaseline;
        cfg.signal = Some(vec![1.0, 1.0, 1.0]);
        cfg.sigmas = vec![0.0];
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(table.rows.iter().all(|r| r.failed() && r.rmse.is_nan()), "{:?}", table.rows);
        assert!(table.cell_summaries()[0].median_rmse.is_infinite());
    }
}
