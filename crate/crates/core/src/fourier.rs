//! DFT helpers and the shift-invariant Fourier features of a signal.
//!
//! Convention: `X[k] = sum_n x[n] e^{-2 pi i k n / L}`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{MtdError, Result};

/// A forward/inverse FFT pair for a fixed length, reusable across calls.
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward transform of a real vector into `out`.
    pub fn forward_real(&self, x: &[f64], out: &mut [Complex64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = Complex64::new(*v, 0.0);
        }
        self.forward.process(out);
    }

    /// Inverse transform, normalized by `1/L`, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }
}

pub fn dft_real(x: &[f64]) -> Vec<Complex64> {
    let dft = Dft::new(x.len());
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    dft.forward_real(x, &mut out);
    out
}

/// Shift-invariant features: mean, power spectrum `|X[k]|^2` and bispectrum
/// `X[k1] X[k2] conj(X[k1+k2])` stored row-major as `L x L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierInvariants {
    pub len: usize,
    pub mean: f64,
    pub power_spectrum: Vec<f64>,
    pub bispectrum: Vec<Complex64>,
}

impl FourierInvariants {
    pub fn bispectrum_at(&self, k1: usize, k2: usize) -> Complex64 {
        self.bispectrum[k1 * self.len + k2]
    }

    /// Exact invariants of a known signal.
    pub fn of_signal(x: &[f64]) -> Self {
        let len = x.len();
        let spec = dft_real(x);
        let power_spectrum = spec.iter().map(|c| c.norm_sqr()).collect();
        let mut bispectrum = Vec::with_capacity(len * len);
        for k1 in 0..len {
            for k2 in 0..len {
                bispectrum.push(spec[k1] * spec[k2] * spec[(k1 + k2) % len].conj());
            }
        }
        FourierInvariants {
            len,
            mean: x.iter().sum::<f64>() / len as f64,
            power_spectrum,
            bispectrum,
        }
    }

    /// Invariants from periodic correlations
    /// `c2[l] = sum_m x[m] x[m+l]` and `c3[l1][l2] = sum_m x[m] x[m+l1] x[m+l2]`
    /// (indices mod L), flattened row-major for `c3`.
    pub fn from_periodic_correlations(mean: f64, c2: &[f64], c3: &[f64]) -> Result<Self> {
        let len = c2.len();
        if c3.len() != len * len {
            return Err(MtdError::domain("periodic correlation shapes disagree"));
        }
        let dft = Dft::new(len);
        let mut p = vec![Complex64::new(0.0, 0.0); len];
        dft.forward_real(c2, &mut p);
        let power_spectrum = p.iter().map(|c| c.re).collect();
        // 2-D DFT of c3: rows then columns
        let mut rows = vec![Complex64::new(0.0, 0.0); len * len];
        for l1 in 0..len {
            dft.forward_real(&c3[l1 * len..(l1 + 1) * len], &mut rows[l1 * len..(l1 + 1) * len]);
        }
        let mut bispectrum = vec![Complex64::new(0.0, 0.0); len * len];
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let mut col = vec![Complex64::new(0.0, 0.0); len];
        for k2 in 0..len {
            for l1 in 0..len {
                col[l1] = rows[l1 * len + k2];
            }
            fft.process(&mut col);
            for k1 in 0..len {
                bispectrum[k1 * len + k2] = col[k1];
            }
        }
        Ok(FourierInvariants {
            len,
            mean,
            power_spectrum,
            bispectrum,
        })
    }
}
