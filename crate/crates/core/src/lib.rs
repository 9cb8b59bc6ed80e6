//! Multi-target detection (MTD) estimation pipeline.
//!
//! * [`model`]: signals, steerable images, group actions, orbit-aligned error.
//! * [`generator`]: MTD observations, MRA sample sets, the MRA-to-MTD embedding.
//! * [`autocorr`]: empirical and ensemble autocorrelations, noise bias, the
//!   well-separated moment limit, debiased MRA Fourier invariants.
//! * [`recovery`]: moment-matching least squares, bispectrum inversion,
//!   identity-group recovery, rotation-invariant coefficient recovery.
//! * [`experiments`]: Monte Carlo sweeps, scaling fits, empirical sample
//!   complexity, MRA vs MTD comparison.
//! * [`io`]: binary observation container, JSON sidecars, CSV formats.
//! * [`verify`]: the built-in invariant suite behind `mtd verify`.

pub mod autocorr;
pub mod error;
pub mod experiments;
pub mod fourier;
pub mod generator;
pub mod io;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{MtdError, Result};
