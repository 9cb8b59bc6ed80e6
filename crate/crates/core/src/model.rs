//! Signals, steerable images, group actions and the orbit-aligned error.
//!
//! Shift convention: `CyclicShift(s)` maps `x` to `y[n] = x[(n - s) mod L]`.
//! Planar rotations act on steerable coefficients only, by
//! `a_{k,q} -> a_{k,q} e^{-i k theta}`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MtdError, Result};
use crate::fourier;

/// Default modulus floor for the non-vanishing-DFT hypothesis.
pub const DFT_FLOOR: f64 = 1e-8;

/// A real signal of length `L >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal {
    values: Vec<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(MtdError::domain(format!(
                "signal length must be at least 2, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MtdError::domain("signal contains non-finite values"));
        }
        Ok(Signal { values })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Signal::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Every DFT coefficient has modulus strictly above `floor`.
    pub fn has_nonvanishing_dft(&self, floor: f64) -> bool {
        fourier::dft_real(&self.values)
            .iter()
            .all(|c| c.norm() > floor)
    }

    /// First and last entries are non-zero.
    pub fn has_nonvanishing_edges(&self) -> bool {
        self.values[0] != 0.0 && self.values[self.len() - 1] != 0.0
    }

    /// Entries i.i.d. uniform on `[-1, 1]`, redrawn until every DFT
    /// coefficient exceeds `floor` in modulus.
    pub fn random_generic<R: Rng + ?Sized>(len: usize, floor: f64, rng: &mut R) -> Result<Self> {
        if len < 2 {
            return Err(MtdError::domain("signal length must be at least 2"));
        }
        loop {
            let values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = Signal { values };
            if s.has_nonvanishing_dft(floor) && s.has_nonvanishing_edges() {
                return Ok(s);
            }
        }
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = MtdError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Signal::new(v)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(s: Signal) -> Self {
        s.values
    }
}

/// Coefficients `a_{k,q}` of a real image in a steerable basis,
/// `-k_max <= k <= k_max`, `0 <= q < Q_k`, with `Q_{-k} = Q_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerableImage {
    k_max: usize,
    /// `rings[k + k_max][q]`.
    rings: Vec<Vec<Complex64>>,
}

impl SteerableImage {
    /// Build from the full ring table, checking conjugate symmetry.
    pub fn new(k_max: usize, rings: Vec<Vec<Complex64>>) -> Result<Self> {
        if rings.len() != 2 * k_max + 1 {
            return Err(MtdError::domain(format!(
                "expected {} rings for k_max = {k_max}, got {}",
                2 * k_max + 1,
                rings.len()
            )));
        }
        let scale = rings
            .iter()
            .flatten()
            .fold(0.0f64, |m, c| m.max(c.norm()))
            .max(1.0);
        for k in 0..=k_max {
            let pos = &rings[k_max + k];
            let neg = &rings[k_max - k];
            if pos.len() != neg.len() {
                return Err(MtdError::domain(format!(
                    "ring {k} and ring -{k} have different sizes"
                )));
            }
            for (a, b) in pos.iter().zip(neg) {
                if (a - b.conj()).norm() > 1e-12 * scale {
                    return Err(MtdError::domain(format!(
                        "coefficients of ring {k} are not conjugate-symmetric"
                    )));
                }
            }
        }
        Ok(SteerableImage { k_max, rings })
    }

    /// Build from the rings `k = 0..=k_max`; negative rings are filled by
    /// conjugation. Ring 0 must be real.
    pub fn from_nonnegative(nonneg: Vec<Vec<Complex64>>) -> Result<Self> {
        if nonneg.is_empty() {
            return Err(MtdError::domain("at least ring 0 is required"));
        }
        let k_max = nonneg.len() - 1;
        if nonneg[0].iter().any(|c| c.im != 0.0) {
            return Err(MtdError::domain("ring 0 coefficients must be real"));
        }
        let mut rings = Vec::with_capacity(2 * k_max + 1);
        for k in (1..=k_max).rev() {
            rings.push(nonneg[k].iter().map(|c| c.conj()).collect());
        }
        rings.extend(nonneg);
        Ok(SteerableImage { k_max, rings })
    }

    /// Complex Gaussian coefficients with `q_per_ring` entries per ring.
    pub fn random<R: Rng + ?Sized>(k_max: usize, q_per_ring: usize, rng: &mut R) -> Self {
        let nonneg: Vec<Vec<Complex64>> = (0..=k_max)
            .map(|k| {
                (0..q_per_ring)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = if k == 0 { 0.0 } else { rng.sample(StandardNormal) };
                        Complex64::new(re, im)
                    })
                    .collect()
            })
            .collect();
        SteerableImage::from_nonnegative(nonneg).expect("ring 0 is real by construction")
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn ring(&self, k: i64) -> &[Complex64] {
        &self.rings[(k + self.k_max as i64) as usize]
    }

    pub fn q_count(&self, k: i64) -> usize {
        self.ring(k).len()
    }

    pub fn coeff(&self, k: i64, q: usize) -> Complex64 {
        self.ring(k)[q]
    }

    pub fn rings(&self) -> &[Vec<Complex64>] {
        &self.rings
    }

    pub fn norm_sq(&self) -> f64 {
        self.rings.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    /// Every ring carries at least one non-zero coefficient.
    pub fn satisfies_ring_hypothesis(&self) -> bool {
        self.rings.iter().all(|r| r.iter().any(|c| *c != Complex64::new(0.0, 0.0)))
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let rings = self
            .rings
            .iter()
            .enumerate()
            .map(|(idx, ring)| {
                let k = idx as f64 - self.k_max as f64;
                let phase = Complex64::from_polar(1.0, -k * theta);
                ring.iter().map(|c| c * phase).collect()
            })
            .collect();
        SteerableImage {
            k_max: self.k_max,
            rings,
        }
    }
}

/// One element of the acting group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupElement {
    CyclicShift { shift: usize },
    Identity,
    PlanarRotation { theta: f64 },
}

impl GroupElement {
    /// Shift by `s`, reduced modulo `len`.
    pub fn shift(s: i64, len: usize) -> Self {
        GroupElement::CyclicShift {
            shift: s.rem_euclid(len as i64) as usize,
        }
    }

    /// Rotation by `theta`, wrapped into `[0, 2pi)`.
    pub fn rotation(theta: f64) -> Self {
        let mut t = theta.rem_euclid(TAU);
        if t >= TAU {
            t = 0.0;
        }
        GroupElement::PlanarRotation { theta: t }
    }

    /// `self ∘ other`, i.e. apply `other` first. `len` is the signal length
    /// used to reduce shifts.
    pub fn compose(&self, other: &GroupElement, len: usize) -> Result<GroupElement> {
        use GroupElement::*;
        match (*self, *other) {
            (Identity, g) | (g, Identity) => Ok(g),
            (CyclicShift { shift: a }, CyclicShift { shift: b }) => {
                Ok(GroupElement::shift((a + b) as i64, len))
            }
            (PlanarRotation { theta: a }, PlanarRotation { theta: b }) => {
                Ok(GroupElement::rotation(a + b))
            }
            _ => Err(MtdError::domain("cannot compose a shift with a rotation")),
        }
    }
}

/// Types on which group elements act.
pub trait GroupAction: Sized {
    fn act(&self, g: &GroupElement) -> Result<Self>;
}

impl GroupAction for Signal {
    fn act(&self, g: &GroupElement) -> Result<Self> {
        match *g {
            GroupElement::Identity => Ok(self.clone()),
            GroupElement::CyclicShift { shift } => Ok(Signal {
                values: cyclic_shift(&self.values, shift),
            }),
            GroupElement::PlanarRotation { .. } => Err(MtdError::domain(
                "planar rotations act on steerable images, not on 1-D signals",
            )),
        }
    }
}

impl GroupAction for SteerableImage {
    fn act(&self, g: &GroupElement) -> Result<Self> {
        match *g {
            GroupElement::Identity => Ok(self.clone()),
            GroupElement::PlanarRotation { theta } => Ok(self.rotated(theta)),
            GroupElement::CyclicShift { .. } => Err(MtdError::domain(
                "cyclic shifts act on 1-D signals, not on steerable images",
            )),
        }
    }
}

pub fn apply_group<T: GroupAction>(g: &GroupElement, x: &T) -> Result<T> {
    x.act(g)
}

/// `y[n] = x[(n - s) mod L]`.
pub fn cyclic_shift(x: &[f64], s: usize) -> Vec<f64> {
    let len = x.len();
    let s = s % len;
    (0..len).map(|n| x[(n + len - s) % len]).collect()
}

/// The law `rho` of the group elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupDistribution {
    UniformCyclic { len: usize },
    CategoricalCyclic { weights: Vec<f64> },
    PointMassIdentity,
    UniformSo2,
}

impl GroupDistribution {
    /// Categorical law over cyclic shifts; weights are normalized to sum 1.
    pub fn categorical(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MtdError::domain("categorical distribution needs weights"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MtdError::domain("categorical weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(MtdError::domain("categorical weights sum to zero"));
        }
        Ok(GroupDistribution::CategoricalCyclic {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupDistribution::UniformCyclic { len } if *len == 0 => {
                Err(MtdError::domain("uniform cyclic distribution over an empty group"))
            }
            GroupDistribution::CategoricalCyclic { weights } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(MtdError::domain("categorical weights must be finite and >= 0"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(MtdError::domain(format!(
                        "categorical weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Check that the law acts on signals of length `len`.
    pub fn check_signal_len(&self, len: usize) -> Result<()> {
        match self {
            GroupDistribution::UniformCyclic { len: l } if *l != len => Err(MtdError::domain(
                format!("distribution is over Z_{l} but the signal has length {len}"),
            )),
            GroupDistribution::CategoricalCyclic { weights } if weights.len() != len => {
                Err(MtdError::domain(format!(
                    "categorical distribution has {} weights but the signal has length {len}",
                    weights.len()
                )))
            }
            GroupDistribution::UniformSo2 => Err(MtdError::domain(
                "SO(2) does not act on 1-D signals",
            )),
            _ => Ok(()),
        }
    }

    /// Atoms of a finite-support law with their probabilities.
    pub fn finite_support(&self) -> Result<Vec<(GroupElement, f64)>> {
        match self {
            GroupDistribution::UniformCyclic { len } => Ok((0..*len)
                .map(|s| (GroupElement::CyclicShift { shift: s }, 1.0 / *len as f64))
                .collect()),
            GroupDistribution::CategoricalCyclic { weights } => Ok(weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(s, w)| (GroupElement::CyclicShift { shift: s }, *w))
                .collect()),
            GroupDistribution::PointMassIdentity => Ok(vec![(GroupElement::Identity, 1.0)]),
            GroupDistribution::UniformSo2 => Err(MtdError::Unsupported(
                "uniform SO(2) has no finite support".into(),
            )),
        }
    }

    pub fn group_kind(&self) -> GroupKind {
        match self {
            GroupDistribution::UniformCyclic { .. } | GroupDistribution::CategoricalCyclic { .. } => {
                GroupKind::Cyclic
            }
            GroupDistribution::PointMassIdentity => GroupKind::Identity,
            GroupDistribution::UniformSo2 => GroupKind::So2,
        }
    }
}

/// Draw one group element from `rho`.
pub fn sample_group<R: Rng + ?Sized>(rho: &GroupDistribution, rng: &mut R) -> GroupElement {
    match rho {
        GroupDistribution::UniformCyclic { len } => GroupElement::CyclicShift {
            shift: rng.random_range(0..*len),
        },
        GroupDistribution::CategoricalCyclic { weights } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last_positive = 0;
            for (s, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                last_positive = s;
                acc += w;
                if u < acc {
                    return GroupElement::CyclicShift { shift: s };
                }
            }
            // u landed in the rounding gap above the last cumulative weight
            GroupElement::CyclicShift {
                shift: last_positive,
            }
        }
        GroupDistribution::PointMassIdentity => GroupElement::Identity,
        GroupDistribution::UniformSo2 => GroupElement::rotation(rng.random_range(0.0..TAU)),
    }
}

/// Which group the orbit is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Cyclic,
    Identity,
    So2,
}

/// Orbit-aligned relative squared error and the aligning element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitFit {
    pub mse: f64,
    pub element: GroupElement,
}

impl OrbitFit {
    pub fn rmse(&self) -> f64 {
        self.mse.sqrt()
    }
}

/// `min_g ||g . x_hat - x||^2 / ||x||^2` over the finite group `kind`.
pub fn orbit_mse(x_hat: &Signal, x: &Signal, kind: GroupKind) -> Result<OrbitFit> {
    if x_hat.len() != x.len() {
        return Err(MtdError::domain(format!(
            "length mismatch: estimate {} vs reference {}",
            x_hat.len(),
            x.len()
        )));
    }
    let denom = x.norm_sq();
    if denom <= 0.0 {
        return Err(MtdError::domain("reference signal has zero norm"));
    }
    let dist = |candidate: &[f64]| -> f64 {
        candidate
            .iter()
            .zip(x.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / denom
    };
    match kind {
        GroupKind::Identity => Ok(OrbitFit {
            mse: dist(x_hat.values()),
            element: GroupElement::Identity,
        }),
        GroupKind::Cyclic => {
            let mut best = OrbitFit {
                mse: f64::INFINITY,
                element: GroupElement::CyclicShift { shift: 0 },
            };
            for s in 0..x.len() {
                let e = dist(&cyclic_shift(x_hat.values(), s));
                if e < best.mse {
                    best = OrbitFit {
                        mse: e,
                        element: GroupElement::CyclicShift { shift: s },
                    };
                }
            }
            Ok(best)
        }
        GroupKind::So2 => Err(MtdError::domain(
            "SO(2) orbit error is defined on steerable images, use orbit_mse_image",
        )),
    }
}

/// Number of grid points for the coarse rotation search.
pub const ROTATION_GRID: usize = 4096;

/// SO(2) orbit error on steerable coefficients: minimize
/// `||R_theta x_hat - x||^2 / ||x||^2` over theta by a grid search,
/// golden-section refinement and a final Newton polish on the derivative.
pub fn orbit_mse_image(x_hat: &SteerableImage, x: &SteerableImage) -> Result<OrbitFit> {
    if x_hat.k_max() != x.k_max()
        || x_hat
            .rings()
            .iter()
            .zip(x.rings())
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(MtdError::domain("steerable images have different shapes"));
    }
    let denom = x.norm_sq();
    if denom <= 0.0 {
        return Err(MtdError::domain("reference image has zero norm"));
    }
    let k_max = x.k_max() as i64;
    // f(theta) = base - 2 Re sum_k e^{-ik theta} c_k with c_k = <x_hat_k, x_k>.
    let cross: Vec<(f64, Complex64)> = (-k_max..=k_max)
        .map(|k| {
            let c: Complex64 = x_hat
                .ring(k)
                .iter()
                .zip(x.ring(k))
                .map(|(a, b)| a * b.conj())
                .sum();
            (k as f64, c)
        })
        .collect();
    let base = x_hat.norm_sq() + denom;
    let deriv = |theta: f64, order: i32| -> f64 {
        // d^n/dtheta^n of Re sum e^{-ik theta} c_k
        cross
            .iter()
            .map(|(k, c)| {
                let rot = Complex64::from_polar(1.0, -k * theta);
                let factor = Complex64::new(0.0, -k).powi(order);
                (rot * c * factor).re
            })
            .sum::<f64>()
    };
    let objective = |theta: f64| base - 2.0 * deriv(theta, 0);

    let step = TAU / ROTATION_GRID as f64;
    let (mut best_theta, _) = (0..ROTATION_GRID)
        .map(|i| {
            let t = i as f64 * step;
            (t, objective(t))
        })
        .fold((0.0, f64::INFINITY), |acc, (t, v)| if v < acc.1 { (t, v) } else { acc });

    // golden-section on the bracketing cell pair
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_theta - step, best_theta + step);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    best_theta = 0.5 * (a + b);

    // Newton on f'(theta) = 0; f' = -2 g', f'' = -2 g''
    for _ in 0..8 {
        let g1 = deriv(best_theta, 1);
        let g2 = deriv(best_theta, 2);
        if g2 >= 0.0 {
            break;
        }
        // objective differences vanish below rounding here, so steps are
        // judged on the size of the derivative instead
        let next = best_theta - g1 / g2;
        if (next - best_theta).abs() > step || deriv(next, 1).abs() > g1.abs() {
            break;
        }
        best_theta = next;
    }

    let theta = best_theta.rem_euclid(TAU);
    let aligned = x_hat.rotated(theta);
    let sq: f64 = aligned
        .rings()
        .iter()
        .flatten()
        .zip(x.rings().iter().flatten())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(OrbitFit {
        mse: sq / denom,
        element: GroupElement::rotation(theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_rng;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let x = sig(&[1.0, 2.0, 3.0]);
        assert_eq!(apply_group(&GroupElement::Identity, &x).unwrap(), x);
        assert_eq!(
            apply_group(&GroupElement::shift(1, 3), &x).unwrap().values(),
            &[3.0, 1.0, 2.0]
        );
        let img = SteerableImage::from_nonnegative(vec![
            vec![Complex64::new(0.0, 0.0)],
            vec![Complex64::new(1.0, 0.0)],
        ])
        .unwrap();
        let r = apply_group(&GroupElement::rotation(std::f64::consts::FRAC_PI_2), &img).unwrap();
        let c = r.coeff(1, 0);
        assert!((c - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn incompatible_actions_are_domain_errors() {
        let x = sig(&[1.0, 2.0]);
        assert!(matches!(
            apply_group(&GroupElement::rotation(0.3), &x),
            Err(MtdError::Domain(_))
        ));
        let img = SteerableImage::random(1, 1, &mut keyed_rng(1, &[]));
        assert!(apply_group(&GroupElement::shift(1, 3), &img).is_err());
    }

    #[test]
    fn element_normalization() {
        assert_eq!(GroupElement::shift(-1, 4), GroupElement::CyclicShift { shift: 3 });
        match GroupElement::rotation(-0.5) {
            GroupElement::PlanarRotation { theta } => assert!((theta - (TAU - 0.5)).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sampling_degenerate_laws() {
        let mut rng = keyed_rng(3, &[]);
        for _ in 0..1000 {
            assert_eq!(
                sample_group(&GroupDistribution::PointMassIdentity, &mut rng),
                GroupElement::Identity
            );
            let cat = GroupDistribution::categorical(vec![1.0, 0.0, 0.0]).unwrap();
            assert_eq!(
                sample_group(&cat, &mut rng),
                GroupElement::CyclicShift { shift: 0 }
            );
        }
    }

    #[test]
    fn uniform_cyclic_frequencies() {
        // 10^6 draws: each frequency within 0.25 +- 0.005, plus a chi-square
        // goodness-of-fit test (3 dof, 99.9% critical value 16.27).
        let mut rng = keyed_rng(11, &[]);
        let rho = GroupDistribution::UniformCyclic { len: 4 };
        let n = 1_000_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            if let GroupElement::CyclicShift { shift } = sample_group(&rho, &mut rng) {
                counts[shift] += 1;
            }
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.005);
        }
    }

    #[test]
    fn categorical_validation() {
        assert!(GroupDistribution::categorical(vec![-1.0, 2.0]).is_err());
        assert!(GroupDistribution::categorical(vec![0.0, 0.0]).is_err());
        let d = GroupDistribution::categorical(vec![1.0, 3.0]).unwrap();
        d.validate().unwrap();
        assert!(GroupDistribution::CategoricalCyclic {
            weights: vec![0.5, 0.6]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn orbit_mse_examples() {
        let x = sig(&[0.3, -1.0, 2.0, 0.5]);
        let shifted = apply_group(&GroupElement::shift(2, 4), &x).unwrap();
        assert_eq!(orbit_mse(&shifted, &x, GroupKind::Cyclic).unwrap().mse, 0.0);

        // enumerate all three shifts of zero: residual is ||x||^2 / ||x||^2
        let e = orbit_mse(&sig(&[0.0, 0.0, 0.0]), &sig(&[1.0, 0.0, 0.0]), GroupKind::Cyclic)
            .unwrap();
        assert_eq!(e.mse, 1.0);

        let x = sig(&[1.0, 2.0, 3.0]);
        let delta = [1e-3, -2e-3, 5e-4];
        let x_hat = sig(&[1.0 + delta[0], 2.0 + delta[1], 3.0 + delta[2]]);
        let brute: f64 = delta.iter().map(|d| d * d).sum::<f64>() / 14.0;
        let e = orbit_mse(&x_hat, &x, GroupKind::Identity).unwrap().mse;
        assert!((e - brute).abs() < 1e-15);

        assert!(orbit_mse(&x, &sig(&[0.0, 0.0, 0.0]), GroupKind::Cyclic).is_err());
        assert!(orbit_mse(&x, &sig(&[1.0, 0.0]), GroupKind::Cyclic).is_err());
    }

    #[test]
    fn image_alignment_recovers_rotation() {
        let mut rng = keyed_rng(5, &[]);
        let img = SteerableImage::random(3, 2, &mut rng);
        let rotated = img.rotated(2.1);
        let fit = orbit_mse_image(&rotated, &img).unwrap();
        assert!(fit.mse < 1e-24, "mse = {}", fit.mse);
        match fit.element {
            GroupElement::PlanarRotation { theta } => {
                assert!((theta - (TAU - 2.1)).abs() < 1e-10)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn conjugate_symmetry_is_enforced() {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        assert!(SteerableImage::new(1, vec![vec![i], vec![one], vec![i]]).is_err());
        assert!(SteerableImage::new(1, vec![vec![-i], vec![one], vec![i]]).is_ok());
        assert!(SteerableImage::from_nonnegative(vec![vec![i]]).is_err());
    }

    proptest! {
        #[test]
        fn shifts_compose(values in prop::collection::vec(-5.0f64..5.0, 2..9), s1 in 0usize..20, s2 in 0usize..20) {
            let x = Signal::new(values).unwrap();
            let l = x.len();
            let g1 = GroupElement::shift(s1 as i64, l);
            let g2 = GroupElement::shift(s2 as i64, l);
            let lhs = apply_group(&g1, &apply_group(&g2, &x).unwrap()).unwrap();
            let rhs = apply_group(&g1.compose(&g2, l).unwrap(), &x).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn orbit_mse_is_shift_invariant(values in prop::collection::vec(-5.0f64..5.0, 2..8),
                                         est in prop::collection::vec(-5.0f64..5.0, 8), s in 0usize..8) {
            let x = Signal::new(values).unwrap();
            prop_assume!(x.norm_sq() > 0.0);
            let x_hat = Signal::new(est[..x.len()].to_vec()).unwrap();
            let moved = apply_group(&GroupElement::shift(s as i64, x.len()), &x_hat).unwrap();
            let a = orbit_mse(&x_hat, &x, GroupKind::Cyclic).unwrap().mse;
            let b = orbit_mse(&moved, &x, GroupKind::Cyclic).unwrap().mse;
            prop_assert_eq!(a, b);
            prop_assert_eq!(orbit_mse(&x, &x, GroupKind::Cyclic).unwrap().mse, 0.0);
        }

        #[test]
        fn rotation_preserves_modulus(seed in 0u64..1000, theta in 0.0f64..7.0) {
            let img = SteerableImage::random(3, 2, &mut keyed_rng(seed, &[]));
            let r = img.rotated(theta);
            for (a, b) in img.rings().iter().flatten().zip(r.rings().iter().flatten()) {
                prop_assert!((a.norm() - b.norm()).abs() <= 1e-15 * a.norm().max(1.0));
            }
        }
    }
}
