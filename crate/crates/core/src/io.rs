//! File formats.
//!
//! Binary observation (`MTD1`), little endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `MTD1` |
//! | 8     | `L` (u64) |
//! | 8     | `M` (u64) |
//! | 8     | `N` (u64) |
//! | 8     | separation mode code (u64) |
//! | 8     | `sigma` (f64) |
//! | 8     | seed (u64) |
//! | 8 L M | samples (f64) |
//!
//! The JSON sidecar `<file>.json` carries the placement plan and, for
//! synthetic data, the ground truth. Signals are stored as CSV with one
//! value per line.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{MtdError, Result};
use crate::generator::{GroundTruth, MtdObservation, PlacementPlan, SeparationMode};
use crate::model::Signal;

pub const MAGIC: &[u8; 4] = b"MTD1";
pub const HEADER_BYTES: usize = 4 + 6 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationHeader {
    pub len: usize,
    pub m: usize,
    pub n: usize,
    pub mode: SeparationMode,
    pub sigma: f64,
    pub seed: u64,
}

impl ObservationHeader {
    pub fn of(obs: &MtdObservation) -> Self {
        ObservationHeader {
            len: obs.plan.len(),
            m: obs.plan.m(),
            n: obs.plan.n(),
            mode: obs.plan.mode(),
            sigma: obs.sigma,
            seed: obs.seed,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn sample_count(&self) -> usize {
        self.len * self.m
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[..4].copy_from_slice(MAGIC);
        let fields = [
            self.len as u64,
            self.m as u64,
            self.n as u64,
            self.mode.code(),
            self.sigma.to_bits(),
            self.seed,
        ];
        for (i, f) in fields.iter().enumerate() {
            out[4 + 8 * i..12 + 8 * i].copy_from_slice(&f.to_le_bytes());
        }
        out
    }

    fn from_bytes(b: &[u8; HEADER_BYTES]) -> Result<Self> {
        if &b[..4] != MAGIC {
            return Err(MtdError::format("bad magic bytes, not an MTD1 observation"));
        }
        let word = |i: usize| {
            u64::from_le_bytes(b[4 + 8 * i..12 + 8 * i].try_into().expect("8 bytes"))
        };
        let mode = SeparationMode::from_code(word(3))
            .ok_or_else(|| MtdError::format(format!("unknown separation mode {}", word(3))))?;
        let header = ObservationHeader {
            len: word(0) as usize,
            m: word(1) as usize,
            n: word(2) as usize,
            mode,
            sigma: f64::from_bits(word(4)),
            seed: word(5),
        };
        if header.len < 2 || header.m == 0 || header.n >= header.m {
            return Err(MtdError::format(format!(
                "inconsistent header: L={}, M={}, N={}",
                header.len, header.m, header.n
            )));
        }
        if !(header.sigma.is_finite() && header.sigma >= 0.0) {
            return Err(MtdError::format("header sigma is not a finite value >= 0"));
        }
        if header.len.checked_mul(header.m).is_none() {
            return Err(MtdError::format("header size overflows"));
        }
        Ok(header)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub plan: PlacementPlan,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub truth: Option<GroundTruth>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the binary observation and its sidecar.
pub fn write_observation(path: &Path, obs: &MtdObservation) -> Result<()> {
    let header = ObservationHeader::of(obs);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header.to_bytes())?;
    for v in &obs.samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        plan: obs.plan.clone(),
        sigma: obs.sigma,
        seed: obs.seed,
        truth: obs.truth.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Read the header and samples of a binary observation.
pub fn read_samples(path: &Path) -> Result<(ObservationHeader, Vec<f64>)> {
    let file = File::open(path)?;
    let size = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut head = [0u8; HEADER_BYTES];
    r.read_exact(&mut head).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => MtdError::format("file is shorter than the header"),
        _ => MtdError::Io(e),
    })?;
    let header = ObservationHeader::from_bytes(&head)?;
    let expected = HEADER_BYTES as u64 + 8 * header.sample_count() as u64;
    if size != expected {
        return Err(MtdError::format(format!(
            "expected {expected} bytes for L={} M={}, found {size}",
            header.len, header.m
        )));
    }
    let mut samples = Vec::with_capacity(header.sample_count());
    let mut buf = vec![0u8; 8 * 8192];
    let mut remaining = header.sample_count();
    while remaining > 0 {
        let take = remaining.min(8192);
        r.read_exact(&mut buf[..8 * take])?;
        samples.extend(
            buf[..8 * take]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))),
        );
        remaining -= take;
    }
    Ok((header, samples))
}

/// Read a binary observation together with its sidecar.
pub fn read_observation(path: &Path) -> Result<MtdObservation> {
    let (header, samples) = read_samples(path)?;
    let sidecar: Sidecar = read_json(&sidecar_path(path))?;
    let p = &sidecar.plan;
    if p.len() != header.len || p.m() != header.m || p.n() != header.n || p.mode() != header.mode
    {
        return Err(MtdError::format("sidecar plan does not match the binary header"));
    }
    Ok(MtdObservation {
        samples,
        plan: sidecar.plan,
        sigma: header.sigma,
        truth: sidecar.truth,
        seed: header.seed,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MtdError::format(format!("{}: {e}", path.display())))
}

/// Parse a configuration document; any schema violation is a config error.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MtdError::config(format!("{}: {e}", path.display())))
}

pub fn signal_to_csv(x: &Signal) -> String {
    x.values().iter().map(|v| format!("{v}\n")).collect()
}

pub fn write_signal_csv(path: &Path, x: &Signal) -> Result<()> {
    std::fs::write(path, signal_to_csv(x))?;
    Ok(())
}

/// One value per line; blank lines and `#` comments are skipped, and a
/// single comma-separated line is also accepted.
pub fn parse_signal_csv(text: &str) -> Result<Signal> {
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for field in line.split(',') {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| MtdError::format(format!("bad signal value `{field}`: {e}")))?,
            );
        }
    }
    Signal::new(values).map_err(|e| MtdError::format(e.to_string()))
}

pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    parse_signal_csv(&std::fs::read_to_string(path)?)
}
