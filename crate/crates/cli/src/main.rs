//! `mtd`: generate observations, compute moments, recover signals and run
//! sweeps from JSON configurations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use mtd_core::autocorr::{empirical_autocorr_samples, AutocorrMeta, AutocorrSet};
use mtd_core::experiments::{run_sweep, Method, SweepConfig};
use mtd_core::generator::{generate_mtd, make_placement, PlacementStrategy, SeparationMode};
use mtd_core::io::{
    read_config, read_json, read_samples, sidecar_path, write_json, write_observation,
    write_signal_csv,
};
use mtd_core::model::{GroupDistribution, Signal};
use mtd_core::recovery::{
    moment_match_lsq, recover_bispectrum_mtd, recover_identity_group, RecoveryConfig,
    RecoveryResult,
};
use mtd_core::rng::{keyed_rng, tag};
use mtd_core::verify::{run_verify, VerifyOptions};
use mtd_core::{MtdError, Result};

#[derive(Parser)]
#[command(name = "mtd", version, about = "Multi-target detection estimation pipeline")]
struct Cli {
    /// Cap on the worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an observation from a generation config.
    Generate(GenerateArgs),
    /// Empirical autocorrelations of an observation file.
    Moments(MomentsArgs),
    /// Estimate the signal from an autocorrelation report.
    Recover(RecoverArgs),
    /// Monte Carlo sweep over a (sigma, size) grid.
    Sweep(SweepArgs),
    /// Run the built-in invariant suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MomentsArgs {
    /// Binary observation file.
    observation: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=3))]
    dmax: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Autocorrelation report (JSON) written by `moments`.
    moments: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lsq,
    Bispectrum,
    Identity,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lsq => Method::Lsq,
            MethodArg::Bispectrum => Method::Bispectrum,
            MethodArg::Identity => Method::Identity,
        }
    }
}

/// Configuration of `generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    signal: Vec<f64>,
    /// Observation length in windows of `L` samples.
    m: usize,
    /// Number of occurrences.
    n: usize,
    sigma: f64,
    /// Defaults to the uniform law on `Z_L`.
    #[serde(default)]
    distribution: Option<GroupDistribution>,
    #[serde(default = "default_separation")]
    separation: SeparationMode,
    #[serde(default)]
    placement: PlacementStrategy,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn default_separation() -> SeparationMode {
    SeparationMode::WellSeparated
}

/// Configuration of `recover`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecoverConfig {
    len: usize,
    /// Defaults to the uniform law on `Z_L`.
    #[serde(default)]
    distribution: Option<GroupDistribution>,
    #[serde(default)]
    method: Option<Method>,
    /// Override the values recorded with the moments.
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    recovery: RecoveryConfig,
    /// Ground truth; when given, the orbit error is reported.
    #[serde(default)]
    truth: Option<Vec<f64>>,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(MtdError::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| MtdError::config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.or(config).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn auto_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ ((std::process::id() as u64) << 32)
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode> {
    let cfg: GenerateConfig = read_config(&a.config)?;
    let x = Signal::new(cfg.signal.clone()).map_err(|e| MtdError::config(e.to_string()))?;
    if cfg.m == 0 || cfg.n >= cfg.m {
        return Err(MtdError::config(format!(
            "density gamma = N/M must be < 1, got N = {} and M = {}",
            cfg.n, cfg.m
        )));
    }
    if !(cfg.sigma.is_finite() && cfg.sigma >= 0.0) {
        return Err(MtdError::config("sigma must be a finite value >= 0"));
    }
    let rho = cfg
        .distribution
        .clone()
        .unwrap_or(GroupDistribution::UniformCyclic { len: x.len() });
    rho.validate().map_err(|e| MtdError::config(e.to_string()))?;
    rho.check_signal_len(x.len()).map_err(|e| MtdError::config(e.to_string()))?;
    let seed = match a.seed.or(cfg.seed) {
        Some(s) => s,
        None => {
            let s = auto_seed();
            info!("no seed given, using {s}");
            s
        }
    };
    let plan = make_placement(
        x.len(),
        cfg.m,
        cfg.n,
        cfg.separation,
        cfg.placement,
        &mut keyed_rng(seed, &[tag::PLACEMENT]),
    )?;
    let obs = generate_mtd(&x, &rho, plan, cfg.sigma, seed)?;
    let dir = out_dir(a.out, cfg.out)?;
    let path = dir.join("observation.bin");
    write_observation(&path, &obs)?;
    println!(
        "wrote {} (L={}, M={}, N={}, sigma={}, seed={}) and {}",
        path.display(),
        obs.len(),
        obs.m(),
        obs.plan.n(),
        obs.sigma,
        seed,
        sidecar_path(&path).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_moments(a: MomentsArgs) -> Result<ExitCode> {
    let (header, samples) = read_samples(&a.observation)?;
    let mut set = empirical_autocorr_samples(&samples, header.len, a.dmax as usize)?;
    set.meta = Some(AutocorrMeta {
        gamma: header.gamma(),
        sigma: header.sigma,
        m: header.m,
    });
    let dir = out_dir(a.out, None)?;
    std::fs::write(dir.join("moments.csv"), set.to_csv())?;
    write_json(&dir.join("moments.json"), &set)?;
    println!(
        "wrote moments up to order {} for L={}, M={} to {}",
        set.d_max,
        set.len,
        header.m,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_recover(a: RecoverArgs) -> Result<ExitCode> {
    let cfg: RecoverConfig = read_config(&a.config)?;
    let observed: AutocorrSet = read_json(&a.moments)?;
    if observed.len != cfg.len {
        return Err(MtdError::config(format!(
            "config len {} does not match moments len {}",
            cfg.len, observed.len
        )));
    }
    let meta = observed.meta;
    let gamma = cfg
        .gamma
        .or(meta.map(|m| m.gamma))
        .ok_or_else(|| MtdError::config("gamma is neither in the config nor in the moments"))?;
    let sigma = cfg
        .sigma
        .or(meta.map(|m| m.sigma))
        .ok_or_else(|| MtdError::config("sigma is neither in the config nor in the moments"))?;
    let rho = cfg
        .distribution
        .clone()
        .unwrap_or(GroupDistribution::UniformCyclic { len: cfg.len });
    rho.validate().map_err(|e| MtdError::config(e.to_string()))?;
    rho.check_signal_len(cfg.len).map_err(|e| MtdError::config(e.to_string()))?;
    let method = a
        .method
        .map(Method::from)
        .or(cfg.method)
        .ok_or_else(|| MtdError::config("no method given (--method or config `method`)"))?;
    let mut rcfg = cfg.recovery.clone();
    if let Some(s) = a.seed {
        rcfg.seed = s;
    }
    rcfg.validate()?;
    let mut result: RecoveryResult = match method {
        Method::Lsq => moment_match_lsq(&observed, &rho, gamma, sigma, &rcfg)?,
        Method::Bispectrum => {
            if rho != (GroupDistribution::UniformCyclic { len: cfg.len }) {
                return Err(MtdError::config(
                    "bispectrum recovery needs the uniform law on Z_L",
                ));
            }
            recover_bispectrum_mtd(&observed, gamma, sigma)?
        }
        Method::Identity => {
            if rho != GroupDistribution::PointMassIdentity {
                return Err(MtdError::config("identity recovery needs the identity law"));
            }
            recover_identity_group(&observed, gamma, sigma, &rcfg)?
        }
    };
    if let Some(t) = &cfg.truth {
        let truth = Signal::new(t.clone()).map_err(|e| MtdError::config(e.to_string()))?;
        if truth.len() != cfg.len {
            return Err(MtdError::config("truth length differs from len"));
        }
        result.score(&truth, rho.group_kind())?;
    }
    for d in &result.diagnostics {
        warn!("{d}");
    }
    let dir = out_dir(a.out, cfg.out)?;
    write_json(&dir.join("recovery.json"), &result)?;
    write_signal_csv(&dir.join("signal.csv"), &result.x_hat)?;
    match result.orbit_rmse {
        Some(e) => println!(
            "{method:?}: residual {:.3e}, converged {}, orbit error {e:.3e}",
            result.residual, result.converged
        ),
        None => println!(
            "{method:?}: residual {:.3e}, converged {}",
            result.residual, result.converged
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let seed = a
        .seed
        .ok_or_else(|| MtdError::config("sweep requires --seed for reproducibility"))?;
    let mut cfg: SweepConfig = read_config(&a.config)?;
    cfg.base_seed = seed;
    cfg.validate()?;
    let table = run_sweep(&cfg)?;
    let summary = table.summary();
    let dir = out_dir(a.out, None)?;
    std::fs::write(dir.join("sweep.csv"), table.to_csv())?;
    write_json(&dir.join("summary.json"), &summary)?;
    let failures = table.rows.iter().filter(|r| r.failed()).count();
    println!(
        "{} rows ({} failed) in {} cells written to {}",
        table.rows.len(),
        failures,
        summary.cells.len(),
        dir.display()
    );
    for s in &summary.slopes {
        println!(
            "slope vs {:?} at {}: {:.3} (r2 {:.3})",
            s.axis, s.fixed, s.fit.slope, s.fit.r2
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let report = run_verify(VerifyOptions {
        inject_fault: a.inject_fault,
        seed: a.seed,
    });
    print!("{}", report.to_text());
    if let Some(dir) = a.out {
        std::fs::create_dir_all(&dir)?;
        write_json(&dir.join("verify.json"), &report)?;
        std::fs::write(dir.join("verify.txt"), report.to_text())?;
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
