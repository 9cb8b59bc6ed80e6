//! Autocorrelations of MTD observations and their model predictions.
//!
//! Empirical autocorrelations of orders 1 to 3 are
//! `a^(d)[l1, l2] = 1/(LM) sum_{j<LM} z~[j] z~[j+l1] z~[j+l2]` where `z~` is the
//! observation followed by `L` zeros. The ensemble mean averages the same
//! products over `j in [0, 2L)` of `Y = [0_L, g.x, 0_L] + eps`, and in the
//! well-separated regime the empirical values converge to
//! `2 gamma * ensemble + (1 - 2 gamma) * chi` with `chi` the pure-noise
//! moments.
//!
//! Sums are accumulated per block of [`BLOCK`] starting indices and the block
//! partials are combined by a fixed pairwise tree, so the result is identical
//! whether blocks are processed sequentially, streamed, or in parallel.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MtdError, Result};
use crate::fourier::{Dft, FourierInvariants};
use crate::generator::{MraSampleSet, MtdObservation, MtdSynthesizer, BLOCK};
use crate::model::{GroupDistribution, GroupElement, Signal};

/// Observation parameters attached to empirical moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutocorrMeta {
    pub gamma: f64,
    pub sigma: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AutocorrRepr {
    len: usize,
    d_max: usize,
    order1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order3: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<AutocorrMeta>,
}

/// Autocorrelation tensors up to order `d_max <= 3`.
///
/// `order2[l]` and `order3[l1 * L + l2]`; orders above `d_max` are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AutocorrRepr", into = "AutocorrRepr")]
pub struct AutocorrSet {
    pub len: usize,
    pub d_max: usize,
    pub order1: f64,
    pub order2: Vec<f64>,
    pub order3: Vec<f64>,
    pub meta: Option<AutocorrMeta>,
}

impl From<AutocorrSet> for AutocorrRepr {
    fn from(a: AutocorrSet) -> Self {
        let order3 = (a.d_max >= 3).then(|| a.order3.chunks(a.len).map(|r| r.to_vec()).collect());
        AutocorrRepr {
            len: a.len,
            d_max: a.d_max,
            order1: a.order1,
            order2: (a.d_max >= 2).then_some(a.order2),
            order3,
            meta: a.meta,
        }
    }
}

impl TryFrom<AutocorrRepr> for AutocorrSet {
    type Error = MtdError;
    fn try_from(r: AutocorrRepr) -> Result<Self> {
        if !(1..=3).contains(&r.d_max) {
            return Err(MtdError::format(format!("d_max must be 1..=3, got {}", r.d_max)));
        }
        let order2 = if r.d_max >= 2 {
            let o = r
                .order2
                .ok_or_else(|| MtdError::format("order2 missing for d_max >= 2"))?;
            if o.len() != r.len {
                return Err(MtdError::format("order2 length differs from L"));
            }
            o
        } else {
            Vec::new()
        };
        let order3 = if r.d_max >= 3 {
            let rows = r
                .order3
                .ok_or_else(|| MtdError::format("order3 missing for d_max = 3"))?;
            if rows.len() != r.len || rows.iter().any(|row| row.len() != r.len) {
                return Err(MtdError::format("order3 is not L x L"));
            }
            rows.into_iter().flatten().collect()
        } else {
            Vec::new()
        };
        Ok(AutocorrSet {
            len: r.len,
            d_max: r.d_max,
            order1: r.order1,
            order2,
            order3,
            meta: r.meta,
        })
    }
}

impl AutocorrSet {
    pub fn zeros(len: usize, d_max: usize) -> Self {
        AutocorrSet {
            len,
            d_max,
            order1: 0.0,
            order2: if d_max >= 2 { vec![0.0; len] } else { Vec::new() },
            order3: if d_max >= 3 { vec![0.0; len * len] } else { Vec::new() },
            meta: None,
        }
    }

    pub fn order3_at(&self, l1: usize, l2: usize) -> f64 {
        self.order3[l1 * self.len + l2]
    }

    /// Largest absolute entry-wise difference over the orders both sets carry.
    pub fn max_abs_diff(&self, other: &AutocorrSet) -> f64 {
        let mut m = (self.order1 - other.order1).abs();
        for (a, b) in self.order2.iter().zip(&other.order2) {
            m = m.max((a - b).abs());
        }
        for (a, b) in self.order3.iter().zip(&other.order3) {
            m = m.max((a - b).abs());
        }
        m
    }

    /// All entries flattened in the order `order1, order2, order3`.
    pub fn entries(&self) -> Vec<f64> {
        let mut v = vec![self.order1];
        v.extend(&self.order2);
        v.extend(&self.order3);
        v
    }

    /// `a * self + b * other`, entry-wise.
    pub fn combine(&self, a: f64, other: &AutocorrSet, b: f64) -> AutocorrSet {
        AutocorrSet {
            len: self.len,
            d_max: self.d_max.min(other.d_max),
            order1: a * self.order1 + b * other.order1,
            order2: self
                .order2
                .iter()
                .zip(&other.order2)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            order3: self
                .order3
                .iter()
                .zip(&other.order3)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            meta: None,
        }
    }

    /// CSV with header `d,l1,l2,value`, one row per lag tuple; lags that do
    /// not exist for an order are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,l1,l2,value\n");
        out.push_str(&format!("1,,,{}\n", self.order1));
        if self.d_max >= 2 {
            for (l, v) in self.order2.iter().enumerate() {
                out.push_str(&format!("2,{l},,{v}\n"));
            }
        }
        if self.d_max >= 3 {
            for l1 in 0..self.len {
                for l2 in 0..self.len {
                    out.push_str(&format!("3,{l1},{l2},{}\n", self.order3_at(l1, l2)));
                }
            }
        }
        out
    }
}

fn check_dmax(d_max: usize) -> Result<()> {
    if !(1..=3).contains(&d_max) {
        return Err(MtdError::domain(format!("d_max must be 1, 2 or 3, got {d_max}")));
    }
    Ok(())
}

/// Raw sums for one block: `[s1, s2[0..L], s3 upper triangle (l1 <= l2)]`.
/// `ext` holds the block's samples followed by up to `L - 1` look-ahead
/// samples (zero beyond the observation end); `count` is the number of
/// starting indices in the block.
fn block_sums(ext: &[f64], count: usize, len: usize, d_max: usize) -> Vec<f64> {
    let tri = len * (len + 1) / 2;
    let mut sums = vec![0.0; 1 + len + tri];
    let (s1, rest) = sums.split_at_mut(1);
    let (s2, s3) = rest.split_at_mut(len);
    let mut acc1 = 0.0;
    for j in 0..count {
        let a = ext[j];
        acc1 += a;
        if d_max < 2 || a == 0.0 {
            continue;
        }
        let w = &ext[j..j + len];
        let mut idx = 0;
        for l1 in 0..len {
            let p = a * w[l1];
            s2[l1] += p;
            if d_max >= 3 {
                for &b in &w[l1..] {
                    s3[idx] += p * b;
                    idx += 1;
                }
            }
        }
    }
    s1[0] = acc1;
    sums
}

fn tree_sum(parts: &[Vec<f64>]) -> Vec<f64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].clone(),
        n => {
            let (l, r) = parts.split_at(n / 2);
            let mut a = tree_sum(l);
            let b = tree_sum(r);
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        }
    }
}

fn finish(sums: Vec<f64>, len: usize, total: usize, d_max: usize) -> AutocorrSet {
    let norm = 1.0 / total as f64;
    let mut out = AutocorrSet::zeros(len, d_max);
    out.order1 = sums[0] * norm;
    if d_max >= 2 {
        for l in 0..len {
            out.order2[l] = sums[1 + l] * norm;
        }
    }
    if d_max >= 3 {
        let mut idx = 1 + len;
        for l1 in 0..len {
            for l2 in l1..len {
                let v = sums[idx] * norm;
                out.order3[l1 * len + l2] = v;
                out.order3[l2 * len + l1] = v;
                idx += 1;
            }
        }
    }
    out
}

/// Empirical autocorrelations of a raw sample vector of length `L * M`.
pub fn empirical_autocorr_samples(samples: &[f64], len: usize, d_max: usize) -> Result<AutocorrSet> {
    check_dmax(d_max)?;
    if len == 0 || samples.is_empty() || samples.len() % len != 0 {
        return Err(MtdError::domain(format!(
            "sample count {} is not a positive multiple of L = {len}",
            samples.len()
        )));
    }
    let total = samples.len();
    let blocks = total.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(total);
            let ext_hi = (hi + len - 1).min(total);
            let mut ext = samples[lo..ext_hi].to_vec();
            ext.resize(hi - lo + len - 1, 0.0);
            block_sums(&ext, hi - lo, len, d_max)
        })
        .collect();
    Ok(finish(tree_sum(&parts), len, total, d_max))
}

/// Empirical autocorrelations of an observation, tagged with its
/// `(gamma, sigma, M)`.
pub fn empirical_autocorr(obs: &MtdObservation, d_max: usize) -> Result<AutocorrSet> {
    let mut a = empirical_autocorr_samples(&obs.samples, obs.len(), d_max)?;
    a.meta = Some(AutocorrMeta {
        gamma: obs.gamma(),
        sigma: obs.sigma,
        m: obs.m(),
    });
    Ok(a)
}

/// Same values as [`empirical_autocorr`] on the materialized observation,
/// computed block by block so that only two blocks are alive at a time.
pub fn empirical_autocorr_streaming(synth: &MtdSynthesizer, sigma: f64, d_max: usize) -> Result<AutocorrSet> {
    check_dmax(d_max)?;
    let len = synth.plan().len();
    let total = synth.total_len();
    let blocks = synth.block_count();
    let block_len = |b: usize| ((b + 1) * BLOCK).min(total) - b * BLOCK;
    let mut current = vec![0.0; block_len(0)];
    synth.fill_block(0, &mut current);
    let mut parts = Vec::with_capacity(blocks);
    let mut ext = Vec::with_capacity(BLOCK + len);
    for b in 0..blocks {
        let next = if b + 1 < blocks {
            let mut nb = vec![0.0; block_len(b + 1)];
            synth.fill_block(b + 1, &mut nb);
            Some(nb)
        } else {
            None
        };
        ext.clear();
        ext.extend_from_slice(&current);
        if let Some(nb) = &next {
            ext.extend(nb.iter().take(len - 1));
        }
        ext.resize(current.len() + len - 1, 0.0);
        parts.push(block_sums(&ext, current.len(), len, d_max));
        if let Some(nb) = next {
            current = nb;
        }
    }
    let mut a = finish(tree_sum(&parts), len, total, d_max);
    a.meta = Some(AutocorrMeta {
        gamma: synth.plan().gamma(),
        sigma,
        m: synth.plan().m(),
    });
    Ok(a)
}

/// Signal-only product sums of one transformed copy `v`:
/// `S2[l] = sum_n v[n] v[n+l]`, `S3[l1,l2] = sum_n v[n] v[n+l1] v[n+l2]`,
/// with indices past `L - 1` contributing zero.
pub(crate) fn copy_sums(v: &[f64], s2: &mut [f64], s3: &mut [f64], weight: f64, d_max: usize) {
    let len = v.len();
    if d_max >= 2 {
        for l in 0..len {
            let mut acc = 0.0;
            for n in 0..len - l {
                acc += v[n] * v[n + l];
            }
            s2[l] += weight * acc;
        }
    }
    if d_max >= 3 {
        for l1 in 0..len {
            for l2 in 0..len {
                let top = l1.max(l2);
                let mut acc = 0.0;
                for n in 0..len - top {
                    acc += v[n] * v[n + l1] * v[n + l2];
                }
                s3[l1 * len + l2] += weight * acc;
            }
        }
    }
}

/// Group-averaged signal sums `E_g S2`, `E_g S3` over a finite-support law.
pub(crate) fn averaged_copy_sums(
    x: &Signal,
    rho: &GroupDistribution,
    d_max: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = x.len();
    let support = rho.finite_support()?;
    let mut s2 = vec![0.0; len];
    let mut s3 = vec![0.0; len * len];
    for (g, p) in support {
        let v = match g {
            GroupElement::CyclicShift { shift } => crate::model::cyclic_shift(x.values(), shift),
            _ => x.values().to_vec(),
        };
        copy_sums(&v, &mut s2, &mut s3, p, d_max);
    }
    Ok((s2, s3))
}

/// Indicator sum `1{l1=l2} + 1{l2=0} + 1{l1=0}` of the order-3 Gaussian
/// pair terms.
pub(crate) fn pair_count(l1: usize, l2: usize) -> f64 {
    (l1 == l2) as u8 as f64 + (l2 == 0) as u8 as f64 + (l1 == 0) as u8 as f64
}

/// Ensemble-mean autocorrelations of `Y = [0_L, g.x, 0_L] + eps`, averaged
/// over `j in [0, 2L)`. The group expectation is an exact sum over the
/// support of `rho`.
pub fn ensemble_autocorr(
    x: &Signal,
    rho: &GroupDistribution,
    sigma: f64,
    d_max: usize,
) -> Result<AutocorrSet> {
    check_dmax(d_max)?;
    if matches!(rho, GroupDistribution::UniformSo2) {
        return Err(MtdError::Unsupported(
            "ensemble autocorrelations need a finite-support distribution".into(),
        ));
    }
    rho.validate()?;
    rho.check_signal_len(x.len())?;
    let len = x.len();
    let window = 2.0 * len as f64;
    let sum_x: f64 = x.values().iter().sum();
    let var = sigma * sigma;
    let (s2, s3) = averaged_copy_sums(x, rho, d_max)?;
    let mut out = AutocorrSet::zeros(len, d_max);
    out.order1 = sum_x / window;
    if d_max >= 2 {
        for l in 0..len {
            out.order2[l] = s2[l] / window + if l == 0 { var } else { 0.0 };
        }
    }
    if d_max >= 3 {
        for l1 in 0..len {
            for l2 in 0..len {
                out.order3[l1 * len + l2] =
                    (s3[l1 * len + l2] + var * sum_x * pair_count(l1, l2)) / window;
            }
        }
    }
    Ok(out)
}

/// Pure-noise moments `chi[l] = E[eps[0] eps[l1] eps[l2]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBias {
    pub sigma: f64,
    pub moments: AutocorrSet,
}

pub fn noise_bias(sigma: f64, len: usize, d_max: usize) -> Result<NoiseBias> {
    check_dmax(d_max)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(MtdError::domain("sigma must be finite and >= 0"));
    }
    let mut moments = AutocorrSet::zeros(len, d_max);
    if d_max >= 2 {
        moments.order2[0] = sigma * sigma;
    }
    Ok(NoiseBias { sigma, moments })
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(MtdError::domain(format!(
            "the well-separated moment limit needs 0 < gamma < 1/2, got {gamma}"
        )));
    }
    Ok(())
}

/// `chi_sign` is `+1` except in the verification suite's fault-injection
/// mode.
pub(crate) fn prediction_with_chi_sign(
    x: &Signal,
    rho: &GroupDistribution,
    sigma: f64,
    gamma: f64,
    d_max: usize,
    chi_sign: f64,
) -> Result<AutocorrSet> {
    check_gamma(gamma)?;
    let ens = ensemble_autocorr(x, rho, sigma, d_max)?;
    let chi = noise_bias(sigma, x.len(), d_max)?;
    let mut p = ens.combine(2.0 * gamma, &chi.moments, chi_sign * (1.0 - 2.0 * gamma));
    p.meta = None;
    Ok(p)
}

/// Almost-sure limit of the empirical autocorrelations of a well-separated
/// observation: `2 gamma * ensemble + (1 - 2 gamma) * chi`.
pub fn mtd_moment_prediction(
    x: &Signal,
    rho: &GroupDistribution,
    sigma: f64,
    gamma: f64,
    d_max: usize,
) -> Result<AutocorrSet> {
    prediction_with_chi_sign(x, rho, sigma, gamma, d_max, 1.0)
}

/// Debiased mean, power spectrum and bispectrum of an MRA sample set.
///
/// With `Z = DFT(z)` and known `sigma`:
/// * mean: average of `Z[0] / L` (unbiased as is);
/// * power spectrum: average of `|Z[k]|^2` minus `L sigma^2`;
/// * bispectrum: average of `Z[k1] Z[k2] conj(Z[k1+k2])` minus
///   `L sigma^2 * (L mean) * (1{k1=0} + 1{k2=0} + 1{k1+k2=0 mod L})`, the
///   expectation of the two-noise-factor terms.
pub fn mra_invariant_features(set: &MraSampleSet) -> Result<FourierInvariants> {
    let n = set.n();
    if n == 0 {
        return Err(MtdError::domain("empty MRA sample set"));
    }
    let len = set.len;
    let dft = Dft::new(len);
    let zero = Complex64::new(0.0, 0.0);
    // per-chunk partial sums, combined in a fixed order
    let chunk = 4096;
    let parts: Vec<(f64, Vec<f64>, Vec<Complex64>)> = set
        .samples
        .par_chunks(chunk * len)
        .map(|rows| {
            let mut spec = vec![zero; len];
            let mut mean = 0.0;
            let mut power = vec![0.0; len];
            let mut bis = vec![zero; len * len];
            for z in rows.chunks_exact(len) {
                dft.forward_real(z, &mut spec);
                mean += spec[0].re;
                for k in 0..len {
                    power[k] += spec[k].norm_sqr();
                }
                for k1 in 0..len {
                    for k2 in 0..len {
                        bis[k1 * len + k2] += spec[k1] * spec[k2] * spec[(k1 + k2) % len].conj();
                    }
                }
            }
            (mean, power, bis)
        })
        .collect();
    let mut mean = 0.0;
    let mut power = vec![0.0; len];
    let mut bis = vec![zero; len * len];
    for (m, p, b) in parts {
        mean += m;
        for (a, v) in power.iter_mut().zip(p) {
            *a += v;
        }
        for (a, v) in bis.iter_mut().zip(b) {
            *a += v;
        }
    }
    let nf = n as f64;
    let lf = len as f64;
    let var = set.sigma * set.sigma;
    let mean = mean / nf / lf;
    let power_spectrum = power.iter().map(|p| p / nf - lf * var).collect();
    let bias = lf * var * lf * mean;
    let bispectrum = (0..len * len)
        .map(|idx| {
            let (k1, k2) = (idx / len, idx % len);
            let hits = (k1 == 0) as u8 + (k2 == 0) as u8 + ((k1 + k2) % len == 0) as u8;
            bis[idx] / nf - Complex64::new(bias * hits as f64, 0.0)
        })
        .collect();
    Ok(FourierInvariants {
        len,
        mean,
        power_spectrum,
        bispectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{
        generate_mra, generate_mtd, make_placement, PlacementPlan, PlacementStrategy,
        SeparationMode,
    };
    use crate::rng::keyed_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    /// Direct triple loop over the zero-padded observation.
    fn naive(z: &[f64], len: usize) -> AutocorrSet {
        let total = z.len();
        let mut pad = z.to_vec();
        pad.extend(std::iter::repeat_n(0.0, len));
        let mut out = AutocorrSet::zeros(len, 3);
        out.order1 = z.iter().sum::<f64>() / total as f64;
        for l1 in 0..len {
            out.order2[l1] = (0..total).map(|j| pad[j] * pad[j + l1]).sum::<f64>() / total as f64;
            for l2 in 0..len {
                out.order3[l1 * len + l2] = (0..total)
                    .map(|j| pad[j] * pad[j + l1] * pad[j + l2])
                    .sum::<f64>()
                    / total as f64;
            }
        }
        out
    }

    #[test]
    fn hand_evaluated_example() {
        let a = empirical_autocorr_samples(&[1.0, 2.0, 0.0, 0.0], 2, 3).unwrap();
        assert_eq!(a.order2, vec![1.25, 0.5]);
        assert_eq!(a.order1, 0.75);
        let zero = empirical_autocorr_samples(&[0.0; 12], 3, 3).unwrap();
        assert!(zero.entries().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn order_one_is_the_mean() {
        let mut rng = keyed_rng(1, &[]);
        let z: Vec<f64> = (0..600).map(|_| rng.sample(StandardNormal)).collect();
        let a = empirical_autocorr_samples(&z, 3, 1).unwrap();
        let m = z.iter().sum::<f64>() / 600.0;
        assert!((a.order1 - m).abs() < 1e-14);
        assert!(a.order2.is_empty() && a.order3.is_empty());
    }

    #[test]
    fn multi_block_matches_naive() {
        let mut rng = keyed_rng(2, &[]);
        let z: Vec<f64> = (0..3 * 5000).map(|_| rng.sample(StandardNormal)).collect();
        let a = empirical_autocorr_samples(&z, 3, 3).unwrap();
        assert!(a.max_abs_diff(&naive(&z, 3)) < 1e-12);
    }

    #[test]
    fn streaming_is_bit_identical() {
        let x = sig(&[1.0, -0.4, 0.7, 2.0]);
        let rho = GroupDistribution::UniformCyclic { len: 4 };
        // total length just past a block boundary leaves a short last block
        let m = (3 * BLOCK) / 4 + 1;
        let plan = make_placement(
            4,
            m,
            m / 5,
            SeparationMode::WellSeparated,
            PlacementStrategy::UniformRandomValid,
            &mut keyed_rng(3, &[]),
        )
        .unwrap();
        let synth = MtdSynthesizer::new(&x, &rho, plan.clone(), 1.3, 77).unwrap();
        let obs = generate_mtd(&x, &rho, plan, 1.3, 77).unwrap();
        let a = empirical_autocorr(&obs, 3).unwrap();
        let b = empirical_autocorr_streaming(&synth, 1.3, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_order_is_rejected() {
        assert!(empirical_autocorr_samples(&[1.0, 2.0], 2, 4).is_err());
        assert!(empirical_autocorr_samples(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn ensemble_examples() {
        let x = sig(&[1.0, 2.0, 3.0]);
        let e = ensemble_autocorr(&x, &GroupDistribution::UniformCyclic { len: 3 }, 0.0, 3).unwrap();
        assert!((e.order1 - 1.0).abs() < 1e-15);

        let z = sig(&[0.0, 0.0, 0.0, 0.0]);
        let e = ensemble_autocorr(&z, &GroupDistribution::UniformCyclic { len: 4 }, 1.5, 3).unwrap();
        assert_eq!(e.order2, vec![2.25, 0.0, 0.0, 0.0]);
        assert!(e.order3.iter().all(|v| *v == 0.0));

        assert!(matches!(
            ensemble_autocorr(&x, &GroupDistribution::UniformSo2, 1.0, 3),
            Err(MtdError::Unsupported(_))
        ));
    }

    /// Monte Carlo estimate of the ensemble mean straight from its definition:
    /// draw (g, eps), build Y in R^{3L}, average the window products.
    #[test]
    fn ensemble_matches_monte_carlo() {
        let x = sig(&[0.8, -1.1, 0.4]);
        let len = 3;
        let weights = vec![0.5, 0.2, 0.3];
        let rho = GroupDistribution::categorical(weights).unwrap();
        let sigma = 0.7;
        let exact = ensemble_autocorr(&x, &rho, sigma, 3).unwrap();
        let draws = 1_000_000;
        let mut rng = keyed_rng(4, &[]);
        let entries = 1 + len + len * len;
        let mut sum = vec![0.0; entries];
        let mut sum_sq = vec![0.0; entries];
        let mut y = vec![0.0; 3 * len];
        let mut val = vec![0.0; entries];
        for _ in 0..draws {
            let g = crate::model::sample_group(&rho, &mut rng);
            let shift = match g {
                GroupElement::CyclicShift { shift } => shift,
                _ => 0,
            };
            let v = crate::model::cyclic_shift(x.values(), shift);
            for (j, yj) in y.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                let s = if (len..2 * len).contains(&j) { v[j - len] } else { 0.0 };
                *yj = s + sigma * e;
            }
            val.fill(0.0);
            for j in 0..2 * len {
                val[0] += y[j];
                for l1 in 0..len {
                    val[1 + l1] += y[j] * y[j + l1];
                    for l2 in 0..len {
                        val[1 + len + l1 * len + l2] += y[j] * y[j + l1] * y[j + l2];
                    }
                }
            }
            for i in 0..entries {
                let w = val[i] / (2 * len) as f64;
                sum[i] += w;
                sum_sq[i] += w * w;
            }
        }
        let nf = draws as f64;
        for (i, e) in exact.entries().iter().enumerate() {
            let m = sum[i] / nf;
            let se = ((sum_sq[i] / nf - m * m) / nf).sqrt();
            assert!((m - e).abs() < 4.0 * se, "entry {i}: mc {m} exact {e} se {se}");
        }
    }

    #[test]
    fn noise_bias_examples() {
        let b = noise_bias(2.0, 3, 3).unwrap();
        assert_eq!(b.moments.order2, vec![4.0, 0.0, 0.0]);
        assert!(b.moments.order3.iter().all(|v| *v == 0.0));
        assert_eq!(b.moments.order1, 0.0);
    }

    #[test]
    fn prediction_identities() {
        let z = sig(&[0.0; 5]);
        let rho = GroupDistribution::UniformCyclic { len: 5 };
        for gamma in [0.01, 0.2, 0.45] {
            let p = mtd_moment_prediction(&z, &rho, 1.7, gamma, 3).unwrap();
            assert!((p.order2[0] - 1.7 * 1.7).abs() < 1e-14);
        }
        // gamma -> 0 leaves the pure noise moments
        let x = sig(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let p = mtd_moment_prediction(&x, &rho, 2.0, 1e-14, 3).unwrap();
        let chi = noise_bias(2.0, 5, 3).unwrap();
        assert!(p.max_abs_diff(&chi.moments) < 1e-10);
        assert!(mtd_moment_prediction(&x, &rho, 1.0, 0.5, 3).is_err());
        assert!(mtd_moment_prediction(&x, &rho, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn pure_noise_observation_matches_prediction() {
        let z = sig(&[0.0; 4]);
        let plan = PlacementPlan::new(vec![0], 4, 250_000, SeparationMode::WellSeparated).unwrap();
        let obs = generate_mtd(&z, &GroupDistribution::PointMassIdentity, plan, 1.0, 5).unwrap();
        let a = empirical_autocorr(&obs, 2).unwrap();
        // sd of the mean of eps^2 over 10^6 samples is sqrt(2)/1000
        assert!((a.order2[0] - 1.0).abs() < 5.0 * 2f64.sqrt() / 1000.0);
    }

    #[test]
    fn single_observation_within_five_standard_errors() {
        let x = sig(&[1.0, -0.5, 0.8, 0.3, -1.2]);
        let len = 5;
        let rho = GroupDistribution::UniformCyclic { len };
        let (gamma, sigma, m) = (0.2, 1.0, 100_000);
        let n = (gamma * m as f64) as usize;
        let pred = mtd_moment_prediction(&x, &rho, sigma, gamma, 3).unwrap();
        let run = |seed: u64| {
            let plan = make_placement(
                len,
                m,
                n,
                SeparationMode::WellSeparated,
                PlacementStrategy::UniformRandomValid,
                &mut keyed_rng(seed, &[1]),
            )
            .unwrap();
            let synth = MtdSynthesizer::new(&x, &rho, plan, sigma, seed).unwrap();
            empirical_autocorr_streaming(&synth, sigma, 3).unwrap().entries()
        };
        // standard errors from independent replicate observations
        let reps: Vec<Vec<f64>> = (100..120).map(run).collect();
        let target = run(7);
        for (i, p) in pred.entries().iter().enumerate() {
            let col: Vec<f64> = reps.iter().map(|r| r[i]).collect();
            let se = crate::stats::variance(&col).sqrt();
            assert!((target[i] - p).abs() < 5.0 * se, "entry {i}");
        }
    }

    #[test]
    fn mra_features_noise_free() {
        let x = sig(&[1.0, 2.0, 3.0, -0.5]);
        let set = generate_mra(&x, &GroupDistribution::PointMassIdentity, 1, 0.0, 0).unwrap();
        let f = mra_invariant_features(&set).unwrap();
        let exact = FourierInvariants::of_signal(x.values());
        assert!((f.mean - exact.mean).abs() < 1e-14);
        for (a, b) in f.power_spectrum.iter().zip(&exact.power_spectrum) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in f.bispectrum.iter().zip(&exact.bispectrum) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mra_features_are_shift_invariant() {
        let x = sig(&[1.0, 2.0, 3.0, -0.5]);
        let set = generate_mra(&x, &GroupDistribution::UniformCyclic { len: 4 }, 200, 0.5, 3).unwrap();
        let mut moved = set.clone();
        for row in moved.samples.chunks_exact_mut(4) {
            let r = crate::model::cyclic_shift(row, 3);
            row.copy_from_slice(&r);
        }
        let a = mra_invariant_features(&set).unwrap();
        let b = mra_invariant_features(&moved).unwrap();
        for (p, q) in a.power_spectrum.iter().zip(&b.power_spectrum) {
            assert!((p - q).abs() < 1e-10);
        }
        for (p, q) in a.bispectrum.iter().zip(&b.bispectrum) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn mra_power_spectrum_debiasing() {
        let x = sig(&[1.0, 2.0, 3.0]);
        let set =
            generate_mra(&x, &GroupDistribution::UniformCyclic { len: 3 }, 1_000_000, 1.0, 6)
                .unwrap();
        let f = mra_invariant_features(&set).unwrap();
        let exact = FourierInvariants::of_signal(x.values());
        for (a, b) in f.power_spectrum.iter().zip(&exact.power_spectrum) {
            assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn mra_bispectrum_debiasing() {
        // Monte Carlo oracle with known x: each debiased bispectrum entry lies
        // within 4 standard errors (computed from the per-sample products) of
        // the exact value.
        let x = sig(&[1.0, -0.5, 2.0]);
        let n = 400_000;
        let set = generate_mra(&x, &GroupDistribution::UniformCyclic { len: 3 }, n, 1.0, 9).unwrap();
        let f = mra_invariant_features(&set).unwrap();
        let exact = FourierInvariants::of_signal(x.values());
        let mut sq_re = [0.0; 9];
        let mut sq_im = [0.0; 9];
        let mut sum = [Complex64::new(0.0, 0.0); 9];
        for z in set.iter() {
            let spec = crate::fourier::dft_real(z);
            for idx in 0..9 {
                let (k1, k2) = (idx / 3, idx % 3);
                let b = spec[k1] * spec[k2] * spec[(k1 + k2) % 3].conj();
                sum[idx] += b;
                sq_re[idx] += b.re * b.re;
                sq_im[idx] += b.im * b.im;
            }
        }
        let nf = n as f64;
        for idx in 0..9 {
            let m = sum[idx] / nf;
            let se_re = ((sq_re[idx] / nf - m.re * m.re) / nf).sqrt();
            let se_im = ((sq_im[idx] / nf - m.im * m.im) / nf).sqrt();
            let d = f.bispectrum[idx] - exact.bispectrum[idx];
            assert!(d.re.abs() < 4.0 * se_re + 1e-9, "idx {idx} re {d}");
            assert!(d.im.abs() < 4.0 * se_im + 1e-9, "idx {idx} im {d}");
        }
    }

    proptest! {
        #[test]
        fn brute_force_equivalence(len in 2usize..=4, m in 1usize..=5, seed in 0u64..10_000) {
            let mut rng = keyed_rng(seed, &[]);
            let z: Vec<f64> = (0..len * m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = empirical_autocorr_samples(&z, len, 3).unwrap();
            prop_assert!(a.max_abs_diff(&naive(&z, len)) < 1e-12);
            for l1 in 0..len {
                for l2 in 0..len {
                    prop_assert_eq!(a.order3_at(l1, l2), a.order3_at(l2, l1));
                }
            }
        }

        #[test]
        fn json_round_trip(len in 2usize..=5, d_max in 1usize..=3, seed in 0u64..1000) {
            let mut rng = keyed_rng(seed, &[]);
            let z: Vec<f64> = (0..len * 3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = empirical_autocorr_samples(&z, len, d_max).unwrap();
            let back: AutocorrSet = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
            prop_assert_eq!(a, back);
        }
    }
}
