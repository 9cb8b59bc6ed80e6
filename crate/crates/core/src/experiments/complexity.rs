use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::sweep::run_trial;
use super::SweepConfig;
use crate::error::{MtdError, Result};
use crate::rng::{derive_seed, tag};
use crate::stats;

/// Range of `N` explored by the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            n_min: 64,
            n_max: 1 << 22,
        }
    }
}

/// Estimator-specific empirical sample complexity: the smallest tested `N`
/// whose median orbit-MSE is at most `epsilon`. It upper-bounds the
/// estimator-free quantity and is never claimed to be tight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub sigma: f64,
    pub epsilon: f64,
    /// `None` when the budget is exhausted.
    pub n_star: Option<usize>,
    /// Largest tested failing `N` below `n_star`, and `n_star` itself.
    pub bracket: (Option<usize>, Option<usize>),
    pub saturated: bool,
    /// `(N, median orbit-MSE)` for every evaluated size, ascending in `N`.
    pub evaluations: Vec<(usize, f64)>,
}

/// Median orbit-MSE at `N`, with trial seeds keyed by `N` so that repeated
/// searches share their evaluations.
fn median_mse(cfg: &SweepConfig, sigma: f64, n: usize) -> Result<f64> {
    let m = (n as f64 / cfg.gamma).round() as usize;
    let cell = cfg.cell_for(0, sigma, n, m)?;
    let mse: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(cfg.base_seed, &[tag::TRIAL, n as u64, t as u64]);
            let r = run_trial(&cell, t, seed).rmse;
            r * r
        })
        .collect();
    Ok(stats::median(&mse))
}

/// Doubling scan from `n_min` until the criterion holds, then a scan of the
/// quarter-octave points `N_lo 2^{j/4}` inside the last octave. For a fixed
/// seed the result is non-increasing in `epsilon`: a larger target can only
/// stop the doubling scan earlier or pass an earlier point of the same
/// octave.
pub fn estimate_sample_complexity(
    cfg: &SweepConfig,
    sigma: f64,
    epsilon: f64,
    budget: SearchBudget,
) -> Result<SampleComplexity> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(MtdError::domain("epsilon must be positive"));
    }
    if budget.n_min == 0 || budget.n_max < budget.n_min {
        return Err(MtdError::config("invalid N budget"));
    }
    let mut probe = cfg.clone();
    probe.sigmas = vec![sigma];
    probe.m_grid.clear();
    probe.n_grid = vec![budget.n_min, budget.n_max];
    probe.validate()?;

    let mut seen: BTreeMap<usize, f64> = BTreeMap::new();
    let mut eval = |n: usize| -> Result<bool> {
        let v = match seen.get(&n) {
            Some(v) => *v,
            None => {
                let v = median_mse(cfg, sigma, n)?;
                log::info!("sample complexity: sigma={sigma} N={n} median mse={v:.4e}");
                seen.insert(n, v);
                v
            }
        };
        Ok(v <= epsilon)
    };

    let mut lo: Option<usize> = None;
    let mut hi: Option<usize> = None;
    let mut n = budget.n_min;
    loop {
        if eval(n)? {
            hi = Some(n);
            break;
        }
        lo = Some(n);
        if n >= budget.n_max {
            break;
        }
        n = (2 * n).min(budget.n_max);
    }
    if let (Some(l), Some(h)) = (lo, hi) {
        for j in 1..4 {
            let candidate = (l as f64 * 2f64.powf(j as f64 / 4.0)).round() as usize;
            if candidate <= l || candidate >= h {
                continue;
            }
            if eval(candidate)? {
                hi = Some(candidate);
                break;
            }
            lo = Some(candidate);
        }
    }
    Ok(SampleComplexity {
        sigma,
        epsilon,
        n_star: hi,
        bracket: (lo, hi),
        saturated: hi.is_none(),
        evaluations: seen.into_iter().collect(),
    })
}
