use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::sweep::row_seed;
use super::{ModelKind, SweepConfig};
use crate::autocorr::{empirical_autocorr, mra_invariant_features};
use crate::error::{MtdError, Result};
use crate::generator::{embed_mra_as_mtd, generate_mra, validate_separation, SeparationMode};
use crate::model::{orbit_mse, GroupDistribution, GroupKind, Signal, DFT_FLOOR};
use crate::recovery::{invert_bispectrum, recover_bispectrum_mtd};
use crate::rng::{derive_seed, tag};
use crate::stats;

/// The same MRA samples scored directly and after embedding into an MTD
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRecord {
    pub cell: usize,
    pub trial: usize,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub mra_rmse: f64,
    pub mtd_rmse: f64,
    /// The embedded observation passed the separation scan.
    pub separation_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCell {
    pub cell: usize,
    pub sigma: f64,
    pub n: usize,
    pub mra_median: f64,
    pub mtd_median: f64,
    pub pooled_se: f64,
    /// `mra_median <= mtd_median + 2 pooled_se`.
    pub mra_not_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTable {
    pub config: SweepConfig,
    pub rows: Vec<PairedRecord>,
}

impl PairedTable {
    pub fn cells(&self) -> Vec<PairedCell> {
        let mut out = Vec::new();
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.cell).collect();
        ids.dedup();
        for id in ids {
            let rows: Vec<&PairedRecord> = self.rows.iter().filter(|r| r.cell == id).collect();
            let mra: Vec<f64> = rows.iter().map(|r| r.mra_rmse).collect();
            let mtd: Vec<f64> = rows.iter().map(|r| r.mtd_rmse).collect();
            let (a, b) = (stats::median(&mra), stats::median(&mtd));
            let pooled = (stats::median_standard_error(&mra).powi(2)
                + stats::median_standard_error(&mtd).powi(2))
            .sqrt();
            out.push(PairedCell {
                cell: id,
                sigma: rows[0].sigma,
                n: rows[0].n,
                mra_median: a,
                mtd_median: b,
                pooled_se: pooled,
                mra_not_worse: a <= b + 2.0 * pooled,
            });
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,N,M,seed,mra_rmse,mtd_rmse,separation_ok\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.sigma, r.n, r.m, r.seed, r.mra_rmse, r.mtd_rmse, r.separation_ok
            );
        }
        out
    }
}

fn rmse_or_nan(x_hat: Result<Signal>, x: &Signal) -> f64 {
    x_hat
        .and_then(|e| orbit_mse(&e, x, GroupKind::Cyclic))
        .map(|f| f.rmse())
        .unwrap_or(f64::NAN)
}

/// Run bispectrum recovery on `N` MRA samples and on the well-separated MTD
/// embedding of those very samples, for every cell and trial of `cfg`.
pub fn mra_vs_mtd_comparison(cfg: &SweepConfig) -> Result<PairedTable> {
    cfg.validate()?;
    if !matches!(cfg.model, ModelKind::ZlUniform | ModelKind::MraBaseline) {
        return Err(MtdError::config(
            "the MRA comparison runs under the uniform law on Z_L",
        ));
    }
    let len = cfg.len;
    let gap = SeparationMode::WellSeparated.min_gap(len);
    for (n, m) in cfg.sizes() {
        if n >= m || n * gap > len * m {
            return Err(MtdError::capacity(format!(
                "N = {n} samples do not fit well separated in M = {m} windows"
            )));
        }
    }
    let x = cfg.signal()?;
    let rho = GroupDistribution::UniformCyclic { len };
    let sizes = cfg.sizes();
    let mut cells = Vec::new();
    for &sigma in &cfg.sigmas {
        for &(n, m) in &sizes {
            cells.push((sigma, n, m));
        }
    }
    let trials = cfg.trials;
    let rows = (0..cells.len() * trials)
        .into_par_iter()
        .map(|i| {
            let (c, t) = (i / trials, i % trials);
            let (sigma, n, m) = cells[c];
            let seed = row_seed(cfg.base_seed, c, t);
            let mut record = PairedRecord {
                cell: c,
                trial: t,
                sigma,
                n,
                m,
                seed,
                mra_rmse: f64::NAN,
                mtd_rmse: f64::NAN,
                separation_ok: false,
            };
            let Ok(set) = generate_mra(&x, &rho, n, sigma, seed) else {
                return record;
            };
            record.mra_rmse = rmse_or_nan(
                mra_invariant_features(&set).and_then(|f| invert_bispectrum(&f, DFT_FLOOR)),
                &x,
            );
            let embed_seed = derive_seed(seed, &[tag::EMBED]);
            match embed_mra_as_mtd(&set, m, SeparationMode::WellSeparated, cfg.placement, embed_seed)
            {
                Ok(obs) => {
                    record.separation_ok = validate_separation(obs.plan.starts(), gap);
                    let est = empirical_autocorr(&obs, 3).and_then(|a| {
                        recover_bispectrum_mtd(&a, obs.gamma(), sigma).map(|r| r.x_hat)
                    });
                    record.mtd_rmse = rmse_or_nan(est, &x);
                }
                Err(e) => log::warn!("embedding failed: {e}"),
            }
            record
        })
        .collect();
    Ok(PairedTable {
        config: cfg.clone(),
        rows,
    })
}
