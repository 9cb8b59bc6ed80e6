//! Synthesis of MTD observations, MRA sample sets and the MRA-to-MTD
//! embedding.
//!
//! Noise is produced in fixed blocks of [`BLOCK`] samples; block `b` is drawn
//! from stream `b` of a generator keyed on the observation seed. A block can
//! therefore be regenerated independently of every other block, which is what
//! lets [`MtdSynthesizer`] stream an observation without materializing it and
//! lets [`generate_mtd`] fill blocks on several threads with identical output.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MtdError, Result};
use crate::model::{cyclic_shift, sample_group, GroupDistribution, GroupElement, Signal};
use crate::rng::{derive_seed, keyed_rng, stream_rng, tag};

/// Samples per noise block.
pub const BLOCK: usize = 4096;

/// Minimal separation between consecutive start indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMode {
    /// `L_sep = L`.
    NonOverlapping,
    /// `L_sep = 2L`.
    WellSeparated,
    /// `L_sep = 2L - 1`, the smallest separation for which the well-separated
    /// autocorrelation limit still holds.
    WellSeparatedMinimal,
}

impl SeparationMode {
    pub fn min_gap(&self, len: usize) -> usize {
        match self {
            SeparationMode::NonOverlapping => len,
            SeparationMode::WellSeparated => 2 * len,
            SeparationMode::WellSeparatedMinimal => 2 * len - 1,
        }
    }

    pub fn code(&self) -> u64 {
        match self {
            SeparationMode::NonOverlapping => 0,
            SeparationMode::WellSeparated => 1,
            SeparationMode::WellSeparatedMinimal => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(SeparationMode::NonOverlapping),
            1 => Some(SeparationMode::WellSeparated),
            2 => Some(SeparationMode::WellSeparatedMinimal),
            _ => None,
        }
    }

    pub fn is_well_separated(&self) -> bool {
        !matches!(self, SeparationMode::NonOverlapping)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    #[default]
    UniformRandomValid,
    Equispaced,
}

#[derive(Debug, Clone, Deserialize)]
struct PlanRepr {
    starts: Vec<usize>,
    len: usize,
    m: usize,
    mode: SeparationMode,
}

/// Start indices of the `N` signal occurrences in an observation of length
/// `L * M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr")]
pub struct PlacementPlan {
    starts: Vec<usize>,
    len: usize,
    m: usize,
    mode: SeparationMode,
}

impl TryFrom<PlanRepr> for PlacementPlan {
    type Error = MtdError;
    fn try_from(r: PlanRepr) -> Result<Self> {
        PlacementPlan::new(r.starts, r.len, r.m, r.mode)
    }
}

fn check_capacity(len: usize, m: usize, n: usize, mode: SeparationMode) -> Result<()> {
    if len < 2 {
        return Err(MtdError::domain("signal length must be at least 2"));
    }
    if n == 0 {
        return Err(MtdError::capacity("at least one occurrence is required"));
    }
    if n >= m {
        return Err(MtdError::capacity(format!(
            "density gamma = N/M = {n}/{m} must be < 1"
        )));
    }
    let gap = mode.min_gap(len);
    if n.checked_mul(gap).is_none_or(|need| need > len * m) {
        return Err(MtdError::capacity(format!(
            "{n} occurrences with separation {gap} do not fit in {} samples",
            len * m
        )));
    }
    Ok(())
}

impl PlacementPlan {
    /// Validate an explicit plan.
    pub fn new(starts: Vec<usize>, len: usize, m: usize, mode: SeparationMode) -> Result<Self> {
        if starts.is_empty() {
            return Err(MtdError::domain("placement plan has no occurrences"));
        }
        if len < 2 || m == 0 {
            return Err(MtdError::domain("plan needs L >= 2 and M >= 1"));
        }
        if starts.len() >= m {
            return Err(MtdError::domain(format!(
                "density N/M = {}/{m} must be < 1",
                starts.len()
            )));
        }
        let gap = mode.min_gap(len);
        for w in starts.windows(2) {
            if w[1] <= w[0] || w[1] - w[0] < gap {
                return Err(MtdError::domain(format!(
                    "starts {} and {} violate the minimal separation {gap}",
                    w[0], w[1]
                )));
            }
        }
        let last = *starts.last().expect("non-empty");
        if last + len > len * m {
            return Err(MtdError::domain(format!(
                "occurrence at {last} overruns the observation of length {}",
                len * m
            )));
        }
        Ok(PlacementPlan {
            starts,
            len,
            m,
            mode,
        })
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn mode(&self) -> SeparationMode {
        self.mode
    }

    pub fn total_len(&self) -> usize {
        self.len * self.m
    }

    pub fn gamma(&self) -> f64 {
        self.n() as f64 / self.m as f64
    }
}

/// Exhaustive pairwise separation scan.
pub fn validate_separation(starts: &[usize], min_gap: usize) -> bool {
    for (i, a) in starts.iter().enumerate() {
        for b in &starts[i + 1..] {
            if a.abs_diff(*b) < min_gap {
                return false;
            }
        }
    }
    true
}

/// Draw (or lay out) a valid plan for `N` occurrences of length `L` in an
/// observation of length `L * M`.
///
/// The random strategy spreads the slack `L*M - L - (N-1) L_sep` over the
/// `N + 1` gaps with a uniform Dirichlet (normalized exponential spacings), so
/// it always terminates, whatever the density.
pub fn make_placement<R: Rng + ?Sized>(
    len: usize,
    m: usize,
    n: usize,
    mode: SeparationMode,
    strategy: PlacementStrategy,
    rng: &mut R,
) -> Result<PlacementPlan> {
    check_capacity(len, m, n, mode)?;
    let total = len * m;
    let gap = mode.min_gap(len);
    let starts = match strategy {
        PlacementStrategy::Equispaced => {
            let spacing = total / n;
            (0..n).map(|i| i * spacing).collect()
        }
        PlacementStrategy::UniformRandomValid => {
            let slack = total - len - (n - 1) * gap;
            let spacings: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let sum: f64 = spacings.iter().sum();
            let mut acc = 0.0;
            let mut prev = 0usize;
            let mut starts = Vec::with_capacity(n);
            for (i, e) in spacings.iter().take(n).enumerate() {
                acc += e;
                let t = ((acc / sum) * slack as f64).floor() as usize;
                let t = t.clamp(prev, slack);
                prev = t;
                starts.push(t + i * gap);
            }
            starts
        }
    };
    PlacementPlan::new(starts, len, m, mode)
}

/// Ground-truth record kept next to synthetic data. Recovery routines take
/// autocorrelations or features only and never see this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub signal: Signal,
    pub elements: Vec<GroupElement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtdObservation {
    pub samples: Vec<f64>,
    pub plan: PlacementPlan,
    pub sigma: f64,
    pub truth: Option<GroundTruth>,
    pub seed: u64,
}

impl MtdObservation {
    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn m(&self) -> usize {
        self.plan.m()
    }

    pub fn gamma(&self) -> f64 {
        self.plan.gamma()
    }

    /// Windows `samples[r_i + offset .. r_i + offset + width]` for every
    /// occurrence whose window lies inside the observation.
    pub fn windows(&self, offset: isize, width: usize) -> Vec<&[f64]> {
        self.plan
            .starts()
            .iter()
            .filter_map(|&r| {
                let lo = r as isize + offset;
                if lo < 0 || lo as usize + width > self.samples.len() {
                    None
                } else {
                    Some(&self.samples[lo as usize..lo as usize + width])
                }
            })
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(MtdError::domain(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

/// Fill `buf` with `sigma * N(0,1)` from stream `block` of `noise_seed`.
fn fill_noise(noise_seed: u64, block: u64, sigma: f64, buf: &mut [f64]) {
    if sigma == 0.0 {
        buf.fill(0.0);
        return;
    }
    let mut rng = stream_rng(noise_seed, block);
    for v in buf.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v = sigma * e;
    }
}

/// Block-wise generator of one MTD observation.
pub struct MtdSynthesizer {
    plan: PlacementPlan,
    sigma: f64,
    noise_seed: u64,
    signal: Signal,
    elements: Vec<GroupElement>,
    /// The transformed copies indexed by shift (index 0 for identity).
    copies: Vec<Vec<f64>>,
}

impl MtdSynthesizer {
    /// Draw the group elements of every occurrence; noise is produced lazily.
    pub fn new(
        x: &Signal,
        rho: &GroupDistribution,
        plan: PlacementPlan,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        rho.validate()?;
        rho.check_signal_len(x.len())?;
        if plan.len() != x.len() {
            return Err(MtdError::domain(format!(
                "plan is for length {} but the signal has length {}",
                plan.len(),
                x.len()
            )));
        }
        let mut group_rng = keyed_rng(seed, &[tag::GROUP]);
        let elements: Vec<GroupElement> = (0..plan.n())
            .map(|_| sample_group(rho, &mut group_rng))
            .collect();
        let copies = (0..x.len()).map(|s| cyclic_shift(x.values(), s)).collect();
        Ok(MtdSynthesizer {
            plan,
            sigma,
            noise_seed: derive_seed(seed, &[tag::NOISE]),
            signal: x.clone(),
            elements,
            copies,
        })
    }

    pub fn plan(&self) -> &PlacementPlan {
        &self.plan
    }

    pub fn total_len(&self) -> usize {
        self.plan.total_len()
    }

    pub fn block_count(&self) -> usize {
        self.total_len().div_ceil(BLOCK)
    }

    /// Samples of block `b`; `buf` must hold exactly the block's length.
    pub fn fill_block(&self, b: usize, buf: &mut [f64]) {
        let start = b * BLOCK;
        let end = (start + BLOCK).min(self.total_len());
        debug_assert_eq!(buf.len(), end - start);
        fill_noise(self.noise_seed, b as u64, self.sigma, buf);
        let len = self.plan.len();
        let starts = self.plan.starts();
        let first = starts.partition_point(|&r| r + len <= start);
        for (i, &r) in starts.iter().enumerate().skip(first) {
            if r >= end {
                break;
            }
            let copy = match self.elements[i] {
                GroupElement::CyclicShift { shift } => &self.copies[shift],
                _ => &self.copies[0],
            };
            let lo = r.max(start);
            let hi = (r + len).min(end);
            for j in lo..hi {
                buf[j - start] += copy[j - r];
            }
        }
    }

    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            signal: self.signal.clone(),
            elements: self.elements.clone(),
        }
    }

    /// Materialize every block.
    pub fn materialize(&self) -> Vec<f64> {
        let mut samples = vec![0.0; self.total_len()];
        samples
            .par_chunks_mut(BLOCK)
            .enumerate()
            .for_each(|(b, chunk)| self.fill_block(b, chunk));
        samples
    }
}

/// `y = sum_i s_i * (g_i . x) + eps` with `g_i ~ rho` i.i.d. and
/// `eps ~ N(0, sigma^2 I)`. All randomness is keyed on `seed`.
pub fn generate_mtd(
    x: &Signal,
    rho: &GroupDistribution,
    plan: PlacementPlan,
    sigma: f64,
    seed: u64,
) -> Result<MtdObservation> {
    let synth = MtdSynthesizer::new(x, rho, plan, sigma, seed)?;
    let samples = synth.materialize();
    Ok(MtdObservation {
        samples,
        truth: Some(synth.truth()),
        plan: synth.plan,
        sigma,
        seed,
    })
}

/// `N` independent MRA samples `z_i = g_i . x + eps_i`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MraSampleSet {
    pub len: usize,
    pub samples: Vec<f64>,
    pub sigma: f64,
    pub truth: Option<GroundTruth>,
    pub seed: u64,
}

impl MraSampleSet {
    pub fn n(&self) -> usize {
        self.samples.len() / self.len
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.len..(i + 1) * self.len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.len)
    }
}

pub fn generate_mra(
    x: &Signal,
    rho: &GroupDistribution,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<MraSampleSet> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(MtdError::domain("MRA needs at least one sample"));
    }
    rho.validate()?;
    rho.check_signal_len(x.len())?;
    let len = x.len();
    let mut group_rng = keyed_rng(seed, &[tag::MRA, tag::GROUP]);
    let elements: Vec<GroupElement> = (0..n).map(|_| sample_group(rho, &mut group_rng)).collect();
    let noise_seed = derive_seed(seed, &[tag::MRA, tag::NOISE]);
    let mut samples = vec![0.0; n * len];
    samples
        .par_chunks_mut(BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| fill_noise(noise_seed, b as u64, sigma, chunk));
    for (i, g) in elements.iter().enumerate() {
        let shift = match g {
            GroupElement::CyclicShift { shift } => *shift,
            _ => 0,
        };
        let row = &mut samples[i * len..(i + 1) * len];
        for (n_idx, v) in row.iter_mut().enumerate() {
            *v += x.values()[(n_idx + len - shift) % len];
        }
    }
    Ok(MraSampleSet {
        len,
        samples,
        sigma,
        truth: Some(GroundTruth {
            signal: x.clone(),
            elements,
        }),
        seed,
    })
}

/// The measurable map from `N` MRA samples to one MTD observation: start
/// from zeros, copy the samples to the plan's start indices, and fill every
/// other index with fresh `N(0, sigma^2)` noise.
pub fn embed_mra_with_plan(
    set: &MraSampleSet,
    plan: PlacementPlan,
    seed: u64,
) -> Result<MtdObservation> {
    if plan.len() != set.len || plan.n() != set.n() {
        return Err(MtdError::domain(format!(
            "plan for (L={}, N={}) does not match the sample set (L={}, N={})",
            plan.len(),
            plan.n(),
            set.len,
            set.n()
        )));
    }
    let len = set.len;
    let total = plan.total_len();
    let mut covered = vec![false; total];
    let mut samples = vec![0.0; total];
    for (i, &r) in plan.starts().iter().enumerate() {
        samples[r..r + len].copy_from_slice(set.sample(i));
        covered[r..r + len].fill(true);
    }
    let noise_seed = derive_seed(seed, &[tag::EMBED, tag::NOISE]);
    let sigma = set.sigma;
    samples
        .par_chunks_mut(BLOCK)
        .zip(covered.par_chunks(BLOCK))
        .enumerate()
        .for_each(|(b, (chunk, cov))| {
            let mut noise = vec![0.0; chunk.len()];
            fill_noise(noise_seed, b as u64, sigma, &mut noise);
            for ((v, c), e) in chunk.iter_mut().zip(cov).zip(noise) {
                if !c {
                    *v = e;
                }
            }
        });
    Ok(MtdObservation {
        samples,
        plan,
        sigma,
        truth: set.truth.clone(),
        seed,
    })
}

/// [`embed_mra_with_plan`] with a freshly drawn plan.
pub fn embed_mra_as_mtd(
    set: &MraSampleSet,
    m: usize,
    mode: SeparationMode,
    strategy: PlacementStrategy,
    seed: u64,
) -> Result<MtdObservation> {
    let mut rng = keyed_rng(seed, &[tag::EMBED, tag::PLACEMENT]);
    let plan = make_placement(set.len, m, set.n(), mode, strategy, &mut rng)?;
    embed_mra_with_plan(set, plan, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupAction;
    use crate::stats;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    #[test]
    fn equispaced_example() {
        let mut rng = keyed_rng(0, &[]);
        let plan = make_placement(
            2,
            4,
            2,
            SeparationMode::WellSeparated,
            PlacementStrategy::Equispaced,
            &mut rng,
        )
        .unwrap();
        assert_eq!(plan.starts(), &[0, 4]);
        assert!(PlacementPlan::new(vec![0, 3], 2, 4, SeparationMode::WellSeparated).is_err());
    }

    #[test]
    fn random_plan_respects_gap() {
        let mut rng = keyed_rng(7, &[]);
        let plan = make_placement(
            3,
            100,
            30,
            SeparationMode::NonOverlapping,
            PlacementStrategy::UniformRandomValid,
            &mut rng,
        )
        .unwrap();
        assert_eq!(plan.n(), 30);
        assert!(validate_separation(plan.starts(), 3));
        assert!(plan.starts().last().unwrap() + 3 <= 300);
    }

    #[test]
    fn infeasible_requests_are_capacity_errors() {
        let mut rng = keyed_rng(0, &[]);
        let r = make_placement(
            5,
            10,
            6,
            SeparationMode::WellSeparated,
            PlacementStrategy::Equispaced,
            &mut rng,
        );
        assert!(matches!(r, Err(MtdError::Capacity(_))));
        // gamma = 1 is rejected even when the separation would fit
        let r = make_placement(
            2,
            4,
            4,
            SeparationMode::NonOverlapping,
            PlacementStrategy::Equispaced,
            &mut rng,
        );
        assert!(matches!(r, Err(MtdError::Capacity(_))));
    }

    #[test]
    fn dense_random_plans_terminate() {
        // gamma = 0.5 with L_sep = 2L leaves zero slack
        let mut rng = keyed_rng(1, &[]);
        let plan = make_placement(
            4,
            1000,
            500,
            SeparationMode::WellSeparated,
            PlacementStrategy::UniformRandomValid,
            &mut rng,
        )
        .unwrap();
        assert!(validate_separation(plan.starts(), 8));
    }

    #[test]
    fn noise_free_single_placement() {
        let plan = PlacementPlan::new(vec![0], 2, 2, SeparationMode::NonOverlapping).unwrap();
        let obs = generate_mtd(&sig(&[1.0, 2.0]), &GroupDistribution::PointMassIdentity, plan, 0.0, 3)
            .unwrap();
        assert_eq!(obs.samples, vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_free_windows_hold_transformed_copies() {
        let x = sig(&[1.0, -2.0, 0.5, 3.0]);
        let mut rng = keyed_rng(2, &[]);
        let plan = make_placement(
            4,
            50,
            10,
            SeparationMode::NonOverlapping,
            PlacementStrategy::UniformRandomValid,
            &mut rng,
        )
        .unwrap();
        let rho = GroupDistribution::UniformCyclic { len: 4 };
        let obs = generate_mtd(&x, &rho, plan, 0.0, 9).unwrap();
        let truth = obs.truth.as_ref().unwrap();
        for (i, &r) in obs.plan.starts().iter().enumerate() {
            let expect = x.act(&truth.elements[i]).unwrap();
            assert_eq!(&obs.samples[r..r + 4], expect.values());
        }
    }

    #[test]
    fn pure_noise_has_unit_variance() {
        let plan = PlacementPlan::new(vec![0], 2, 500_000, SeparationMode::NonOverlapping).unwrap();
        let obs = generate_mtd(&sig(&[0.0, 0.0]), &GroupDistribution::PointMassIdentity, plan, 1.0, 4)
            .unwrap();
        assert_eq!(obs.samples.len(), 1_000_000);
        let v = stats::variance(&obs.samples);
        assert!((v - 1.0).abs() < 0.01, "variance {v}");
    }

    #[test]
    fn streaming_blocks_match_materialized() {
        let x = sig(&[0.5, 1.0, -1.0]);
        let mut rng = keyed_rng(5, &[]);
        let plan = make_placement(
            3,
            5000,
            700,
            SeparationMode::WellSeparated,
            PlacementStrategy::UniformRandomValid,
            &mut rng,
        )
        .unwrap();
        let rho = GroupDistribution::UniformCyclic { len: 3 };
        let synth = MtdSynthesizer::new(&x, &rho, plan.clone(), 0.7, 12).unwrap();
        let full = generate_mtd(&x, &rho, plan, 0.7, 12).unwrap();
        let mut streamed = Vec::new();
        for b in 0..synth.block_count() {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(synth.total_len());
            let mut buf = vec![0.0; hi - lo];
            synth.fill_block(b, &mut buf);
            streamed.extend(buf);
        }
        assert_eq!(streamed, full.samples);
    }

    #[test]
    fn mra_examples() {
        let x = sig(&[1.0, 2.0, 3.0]);
        let set = generate_mra(&x, &GroupDistribution::PointMassIdentity, 10, 0.0, 1).unwrap();
        assert!(set.iter().all(|s| s == x.values()));
        let set = generate_mra(&x, &GroupDistribution::UniformCyclic { len: 3 }, 50, 0.0, 1).unwrap();
        for s in set.iter() {
            assert!((0..3).any(|k| cyclic_shift(x.values(), k) == s));
        }
    }

    #[test]
    fn mra_mean_is_flat() {
        // E over uniform shifts of g.x is mean(x) in every entry
        let x = sig(&[1.0, 2.0, 3.0]);
        let set =
            generate_mra(&x, &GroupDistribution::UniformCyclic { len: 3 }, 1_000_000, 1.0, 8)
                .unwrap();
        for j in 0..3 {
            let m = set.iter().map(|s| s[j]).sum::<f64>() / set.n() as f64;
            assert!((m - 2.0).abs() < 0.01, "entry {j}: {m}");
        }
    }

    #[test]
    fn embedding_example() {
        let set = MraSampleSet {
            len: 2,
            samples: vec![5.0, 6.0],
            sigma: 0.0,
            truth: None,
            seed: 0,
        };
        let plan = PlacementPlan::new(vec![2], 2, 3, SeparationMode::NonOverlapping).unwrap();
        let obs = embed_mra_with_plan(&set, plan, 0).unwrap();
        assert_eq!(obs.samples, vec![0.0, 0.0, 5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_complement_is_gaussian() {
        let x = sig(&[1.0, -0.5, 2.0, 0.3, -1.2]);
        let rho = GroupDistribution::UniformCyclic { len: 5 };
        let set = generate_mra(&x, &rho, 2000, 1.5, 3).unwrap();
        let obs = embed_mra_as_mtd(
            &set,
            22_000,
            SeparationMode::WellSeparated,
            PlacementStrategy::UniformRandomValid,
            4,
        )
        .unwrap();
        assert!(validate_separation(obs.plan.starts(), 10));
        let mut covered = vec![false; obs.samples.len()];
        for &r in obs.plan.starts() {
            covered[r..r + 5].fill(true);
        }
        let complement: Vec<f64> = obs
            .samples
            .iter()
            .zip(&covered)
            .filter(|(_, c)| !**c)
            .map(|(v, _)| *v)
            .take(100_000)
            .collect();
        assert_eq!(complement.len(), 100_000);
        let (_, p) = stats::ks_normal(&complement, 1.5);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn generation_is_reproducible() {
        let x = sig(&[1.0, 2.0, -1.0]);
        let rho = GroupDistribution::UniformCyclic { len: 3 };
        let mk = || {
            let mut rng = keyed_rng(42, &[tag::PLACEMENT]);
            let plan = make_placement(
                3,
                3000,
                200,
                SeparationMode::WellSeparated,
                PlacementStrategy::UniformRandomValid,
                &mut rng,
            )
            .unwrap();
            generate_mtd(&x, &rho, plan, 1.0, 42).unwrap()
        };
        let a = mk();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(mk);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn every_plan_is_separated(len in 2usize..6, m in 10usize..200, frac in 0.01f64..1.0,
                                   mode_idx in 0usize..3, seed in 0u64..1000, equi in any::<bool>()) {
            let mode = [SeparationMode::NonOverlapping, SeparationMode::WellSeparated,
                        SeparationMode::WellSeparatedMinimal][mode_idx];
            let gap = mode.min_gap(len);
            let max_n = ((len * m) / gap).min(m - 1).max(1);
            let n = ((max_n as f64 * frac).ceil() as usize).clamp(1, max_n);
            let strategy = if equi { PlacementStrategy::Equispaced } else { PlacementStrategy::UniformRandomValid };
            let plan = make_placement(len, m, n, mode, strategy, &mut keyed_rng(seed, &[])).unwrap();
            prop_assert_eq!(plan.n(), n);
            prop_assert!(validate_separation(plan.starts(), gap));
            prop_assert!(plan.starts().last().unwrap() + len <= len * m);
        }
    }
}
