//! Built-in invariant suite, run at small scale by `mtd verify`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autocorr::{
    empirical_autocorr, empirical_autocorr_samples, empirical_autocorr_streaming,
    prediction_with_chi_sign,
};
use crate::error::Result;
use crate::fourier::FourierInvariants;
use crate::generator::{
    embed_mra_as_mtd, generate_mra, generate_mtd, make_placement, validate_separation,
    MtdSynthesizer, PlacementStrategy, SeparationMode,
};
use crate::model::{
    cyclic_shift, orbit_mse, orbit_mse_image, GroupDistribution, GroupKind, Signal,
    SteerableImage, DFT_FLOOR,
};
use crate::recovery::{
    invert_bispectrum, moment_match_lsq, recover_rotation_coeffs, rotation_invariants,
    MomentObjective, RecoveryConfig,
};
use crate::rng::{derive_seed, keyed_rng, tag};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Flip the sign of the pure-noise term in the moment prediction. The
    /// order-2 prediction check must then fail.
    pub inject_fault: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )
            })
            .collect()
    }
}

/// Outcome of one check body: `(passed, detail)`.
type Outcome = Result<(bool, String)>;

fn naive_autocorr(z: &[f64], len: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let total = z.len();
    let at = |i: usize| if i < total { z[i] } else { 0.0 };
    let scale = 1.0 / total as f64;
    let a1 = z.iter().sum::<f64>() * scale;
    let a2 = (0..len)
        .map(|l| (0..total).map(|j| at(j) * at(j + l)).sum::<f64>() * scale)
        .collect();
    let mut a3 = vec![0.0; len * len];
    for l1 in 0..len {
        for l2 in 0..len {
            a3[l1 * len + l2] =
                (0..total).map(|j| at(j) * at(j + l1) * at(j + l2)).sum::<f64>() * scale;
        }
    }
    (a1, a2, a3)
}

fn check_brute_force(seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = keyed_rng(seed, &[1, trial]);
        let len = rng.random_range(2..=4);
        let m = rng.random_range(1..=5);
        let z: Vec<f64> = (0..len * m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = empirical_autocorr_samples(&z, len, 3)?;
        let (a1, a2, a3) = naive_autocorr(&z, len);
        worst = worst.max((fast.order1 - a1).abs());
        for (a, b) in fast.order2.iter().zip(&a2) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in fast.order3.iter().zip(&a3) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e} (tolerance 1e-12)")))
}

fn check_prediction(seed: u64, chi_sign: f64) -> Result<Vec<CheckResult>> {
    let len = 5;
    let x = Signal::new(vec![1.0, -0.5, 0.8, 0.3, -1.2])?;
    let rho = GroupDistribution::UniformCyclic { len };
    let (m, n, sigma) = (200_000, 40_000, 1.0);
    let mut rng = keyed_rng(seed, &[2, tag::PLACEMENT]);
    let plan = make_placement(
        len,
        m,
        n,
        SeparationMode::WellSeparated,
        PlacementStrategy::UniformRandomValid,
        &mut rng,
    )?;
    let gamma = plan.gamma();
    let synth = MtdSynthesizer::new(&x, &rho, plan, sigma, derive_seed(seed, &[2]))?;
    let emp = empirical_autocorr_streaming(&synth, sigma, 3)?;
    let pred = prediction_with_chi_sign(&x, &rho, sigma, gamma, 3, chi_sign)?;
    let d1 = (emp.order1 - pred.order1).abs();
    let d2 = emp
        .order2
        .iter()
        .zip(&pred.order2)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let d3 = emp
        .order3
        .iter()
        .zip(&pred.order3)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let mk = |name: &str, d: f64, tol: f64| CheckResult {
        name: name.to_string(),
        passed: d <= tol,
        detail: format!("max |empirical - predicted| = {d:.3e} (tolerance {tol})"),
    };
    Ok(vec![
        mk("order1_prediction", d1, 0.02),
        mk("order2_prediction", d2, 0.02),
        mk("order3_prediction", d3, 0.05),
    ])
}

fn check_bispectrum_exact(seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..40u64 {
        let mut rng = keyed_rng(seed, &[3, trial]);
        let len = rng.random_range(2..=9);
        let x = Signal::random_generic(len, DFT_FLOOR, &mut rng)?;
        let x_hat = invert_bispectrum(&FourierInvariants::of_signal(x.values()), DFT_FLOOR)?;
        worst = worst.max(orbit_mse(&x_hat, &x, GroupKind::Cyclic)?.mse);
    }
    Ok((worst < 1e-8, format!("worst orbit mse {worst:.2e} (tolerance 1e-8)")))
}

fn check_lsq_exact(seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..5u64 {
        let mut rng = keyed_rng(seed, &[4, trial]);
        let x = Signal::random_generic(4, DFT_FLOOR, &mut rng)?;
        let rho = GroupDistribution::UniformCyclic { len: 4 };
        let obs = prediction_with_chi_sign(&x, &rho, 0.5, 0.2, 3, 1.0)?;
        let cfg = RecoveryConfig {
            seed: trial,
            ..RecoveryConfig::default()
        };
        let res = moment_match_lsq(&obs, &rho, 0.2, 0.5, &cfg)?;
        worst = worst.max(orbit_mse(&res.x_hat, &x, GroupKind::Cyclic)?.mse);
    }
    Ok((worst < 1e-8, format!("worst orbit mse {worst:.2e} (tolerance 1e-8)")))
}

fn check_gradient(seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = keyed_rng(seed, &[5, trial]);
        let len = rng.random_range(2..=5);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let truth = Signal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let rho = GroupDistribution::UniformCyclic { len };
        let obs = prediction_with_chi_sign(&truth, &rho, 0.7, 0.2, 3, 1.0)?;
        let obj = MomentObjective::new(&obs, &rho, 0.2, 0.7, &RecoveryConfig::default())?;
        let mut g = vec![0.0; len];
        obj.value_and_gradient(&x, &mut g);
        let h = 1e-6;
        for i in 0..len {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(1e-3));
        }
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e} (tolerance 1e-5)")))
}

fn check_rotation(seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = keyed_rng(seed, &[6, trial]);
        let img = SteerableImage::random(3, 2, &mut rng);
        let est = recover_rotation_coeffs(&rotation_invariants(&img.rotated(0.7)))?;
        worst = worst.max(orbit_mse_image(&est, &img)?.mse);
    }
    Ok((worst < 1e-8, format!("worst aligned error {worst:.2e} (tolerance 1e-8)")))
}

fn check_embedding(seed: u64) -> Outcome {
    let x = Signal::new(vec![0.5, 1.0, -0.7])?;
    let rho = GroupDistribution::UniformCyclic { len: 3 };
    let set = generate_mra(&x, &rho, 500, 1.0, derive_seed(seed, &[7]))?;
    let mut ok = true;
    for mode in [
        SeparationMode::NonOverlapping,
        SeparationMode::WellSeparated,
        SeparationMode::WellSeparatedMinimal,
    ] {
        let obs = embed_mra_as_mtd(
            &set,
            2000,
            mode,
            PlacementStrategy::UniformRandomValid,
            derive_seed(seed, &[7, mode.code()]),
        )?;
        ok &= validate_separation(obs.plan.starts(), mode.min_gap(3));
        for (i, &r) in obs.plan.starts().iter().enumerate() {
            ok &= obs.samples[r..r + 3] == *set.sample(i);
        }
    }
    Ok((ok, "separation scan and sample placement".to_string()))
}

fn check_orbit_invariance(seed: u64) -> Outcome {
    let mut rng = keyed_rng(seed, &[8]);
    let x = Signal::random_generic(6, DFT_FLOOR, &mut rng)?;
    let mut worst = 0.0f64;
    for s in 0..6 {
        let y = Signal::new(cyclic_shift(x.values(), s))?;
        worst = worst.max(orbit_mse(&y, &x, GroupKind::Cyclic)?.mse);
    }
    Ok((worst == 0.0, format!("max orbit mse over shifts {worst:.2e}")))
}

fn check_streaming(seed: u64) -> Outcome {
    let x = Signal::new(vec![1.0, 2.0, -1.0, 0.5])?;
    let rho = GroupDistribution::UniformCyclic { len: 4 };
    let mut rng = keyed_rng(seed, &[9]);
    let plan = make_placement(
        4,
        5000,
        500,
        SeparationMode::WellSeparated,
        PlacementStrategy::UniformRandomValid,
        &mut rng,
    )?;
    let obs = generate_mtd(&x, &rho, plan.clone(), 1.0, 10)?;
    let synth = MtdSynthesizer::new(&x, &rho, plan, 1.0, 10)?;
    let a = empirical_autocorr(&obs, 3)?;
    let b = empirical_autocorr_streaming(&synth, 1.0, 3)?;
    Ok((a == b, "streamed and materialized moments are identical".to_string()))
}

fn record(checks: &mut Vec<CheckResult>, name: &str, outcome: Outcome) {
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    checks.push(CheckResult {
        name: name.to_string(),
        passed,
        detail,
    });
}

pub fn run_verify(opts: VerifyOptions) -> VerifyReport {
    let seed = opts.seed;
    let mut checks = Vec::new();
    record(&mut checks, "autocorr_brute_force", check_brute_force(seed));
    let chi_sign = if opts.inject_fault { -1.0 } else { 1.0 };
    match check_prediction(seed, chi_sign) {
        Ok(found) => checks.extend(found),
        Err(e) => record(&mut checks, "moment_prediction", Err(e)),
    }
    record(&mut checks, "streaming_equals_materialized", check_streaming(seed));
    record(&mut checks, "orbit_invariance", check_orbit_invariance(seed));
    record(&mut checks, "embedding_separation", check_embedding(seed));
    record(&mut checks, "gradient_finite_differences", check_gradient(seed));
    record(&mut checks, "bispectrum_exact_recovery", check_bispectrum_exact(seed));
    record(&mut checks, "lsq_exact_recovery", check_lsq_exact(seed));
    record(&mut checks, "rotation_exact_recovery", check_rotation(seed));
    VerifyReport { checks }
}
