//! Steerable-coefficient recovery under uniform planar rotations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MtdError, Result};
use crate::model::SteerableImage;

/// Third-order invariants for one frequency pair:
/// `values[(q1 * Q_k2 + q2) * Q_k3 + q3] = a_{k1,q1} a_{k2,q2} conj(a_{k3,q3})`
/// with `k3 = k1 + k2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleBlock {
    pub k1: i64,
    pub k2: i64,
    pub values: Vec<Complex64>,
}

/// Second- and third-order rotation invariants of a steerable image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationInvariants {
    pub k_max: usize,
    /// `Q_k` for `k = 0..=k_max`.
    pub q_counts: Vec<usize>,
    /// `power[k][q * Q_k + q'] = a_{k,q} conj(a_{k,q'})` for `k = 0..=k_max`.
    pub power: Vec<Vec<Complex64>>,
    /// One block per `(k1, k2)` with `|k1|, |k2|, |k1 + k2| <= k_max`.
    pub triples: Vec<TripleBlock>,
}

impl RotationInvariants {
    fn q(&self, k: i64) -> usize {
        self.q_counts[k.unsigned_abs() as usize]
    }

    pub fn triple(&self, k1: i64, k2: i64, q1: usize, q2: usize, q3: usize) -> Option<Complex64> {
        let block = self.triples.iter().find(|b| b.k1 == k1 && b.k2 == k2)?;
        let (n2, n3) = (self.q(k2), self.q(k1 + k2));
        block.values.get((q1 * n2 + q2) * n3 + q3).copied()
    }
}

pub fn rotation_invariants(img: &SteerableImage) -> RotationInvariants {
    let k_max = img.k_max();
    let km = k_max as i64;
    let q_counts: Vec<usize> = (0..=km).map(|k| img.q_count(k)).collect();
    let power = (0..=km)
        .map(|k| {
            let ring = img.ring(k);
            ring.iter()
                .flat_map(|a| ring.iter().map(move |b| a * b.conj()))
                .collect()
        })
        .collect();
    let mut triples = Vec::new();
    for k1 in -km..=km {
        for k2 in -km..=km {
            let k3 = k1 + k2;
            if k3.abs() > km {
                continue;
            }
            let (r1, r2, r3) = (img.ring(k1), img.ring(k2), img.ring(k3));
            let mut values = Vec::with_capacity(r1.len() * r2.len() * r3.len());
            for a in r1 {
                for b in r2 {
                    for c in r3 {
                        values.push(a * b * c.conj());
                    }
                }
            }
            triples.push(TripleBlock { k1, k2, values });
        }
    }
    RotationInvariants {
        k_max,
        q_counts,
        power,
        triples,
    }
}

/// Recover the coefficients up to a rotation.
///
/// Each ring is read off the column of its power matrix at the largest
/// diagonal entry, which leaves one unknown phase per ring. The phase of
/// ring 1 is set to zero (so its largest-modulus coefficient is real and
/// positive), ring 0 takes its sign from the triple `(0, 0)`, and higher
/// rings are marched through the triples `(k1, k - k1)`.
pub fn recover_rotation_coeffs(inv: &RotationInvariants) -> Result<SteerableImage> {
    let k_max = inv.k_max;
    if inv.q_counts.len() != k_max + 1 || inv.power.len() != k_max + 1 {
        return Err(MtdError::domain("invariant tables do not match k_max"));
    }
    let mut pivots = Vec::with_capacity(k_max + 1);
    let mut rings: Vec<Vec<Complex64>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let q = inv.q_counts[k];
        let p = &inv.power[k];
        if q == 0 || p.len() != q * q {
            return Err(MtdError::domain(format!("power matrix of ring {k} is malformed")));
        }
        let pivot = (0..q)
            .max_by(|&a, &b| p[a * q + a].re.total_cmp(&p[b * q + b].re))
            .expect("ring is non-empty");
        let top = p[pivot * q + pivot].re;
        if !(top > 0.0) {
            return Err(MtdError::domain(format!(
                "ring {k} vanishes; every ring needs a non-zero coefficient"
            )));
        }
        let scale = top.sqrt();
        rings.push((0..q).map(|r| p[r * q + pivot] / scale).collect());
        pivots.push(pivot);
    }

    let mut phase = vec![0.0; k_max + 1];
    let t00 = inv
        .triple(0, 0, pivots[0], pivots[0], pivots[0])
        .ok_or_else(|| MtdError::domain("missing triple invariant (0, 0)"))?;
    phase[0] = t00.arg();
    for k in 2..=k_max {
        let mut acc = Complex64::new(0.0, 0.0);
        for k1 in 1..=k / 2 {
            let k2 = k - k1;
            let t = inv
                .triple(k1 as i64, k2 as i64, pivots[k1], pivots[k2], pivots[k])
                .ok_or_else(|| MtdError::domain(format!("missing triple ({k1}, {k2})")))?;
            acc += Complex64::from_polar(t.norm(), phase[k1] + phase[k2] - t.arg());
        }
        if acc.norm() == 0.0 {
            return Err(MtdError::domain(format!(
                "triple invariants vanish on every pair summing to {k}"
            )));
        }
        phase[k] = acc.arg();
    }
    for (k, ring) in rings.iter_mut().enumerate() {
        let rot = Complex64::from_polar(1.0, phase[k]);
        for c in ring.iter_mut() {
            *c *= rot;
        }
    }
    // ring 0 is real up to rounding
    for c in rings[0].iter_mut() {
        *c = Complex64::new(c.re, 0.0);
    }
    SteerableImage::from_nonnegative(rings)
}
