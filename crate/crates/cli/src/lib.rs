//! Command-line driver: data generation, training, evaluation, sweeps,
//! best-of-N, numerical checks and the loss ablation.
//!
//! Exit status is 0 on success, 2 for usage and configuration errors and 1
//! for anything that goes wrong while running.

pub mod ablate;
mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use prmlab_core::LossMode;

use crate::config::Config;

/// Overrides the output directory for relative `--out` paths.
pub const OUT_DIR_ENV: &str = "PRMLAB_OUT_DIR";
/// Overrides the worker thread count.
pub const WORKERS_ENV: &str = "PRMLAB_WORKERS";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags; exit status 2.
    Config(String),
    /// Failure while running; exit status 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Runtime(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

impl From<prmlab_core::Error> for CliError {
    fn from(err: prmlab_core::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "prmlab",
    version,
    about = "Weakly supervised step-level reward models"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train a scorer and write a checkpoint.
    Train(TrainArgs),
    /// First-error F1 at one threshold, with a prediction log.
    Eval(EvalArgs),
    /// First-error F1 over a threshold grid.
    Sweep(SweepArgs),
    /// Best-of-N accuracy on a candidate file.
    Bon(BonArgs),
    /// Finite-difference check of the scorer's parameter gradients.
    Gradcheck(GradcheckArgs),
    /// Checks of the expected-loss gradient identities.
    TheoryCheck(TheoryCheckArgs),
    /// Monte-Carlo check of the sampled loss against its expectation.
    McCheck(McCheckArgs),
    /// Buffer on/off by last-step weight 1 or 3.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long)]
    pub steps_min: Option<usize>,
    #[arg(long)]
    pub steps_max: Option<usize>,
    #[arg(long)]
    pub error_rate: Option<f64>,
    #[arg(long)]
    pub flip_rate: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the final step.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub buffer: Option<bool>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LossMode>,
    /// Seed for the buffer-factor draws.
    #[arg(long)]
    pub loss_seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hash_seed: Option<u64>,
    #[arg(long)]
    pub use_position: Option<bool>,
    #[arg(long)]
    pub init_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BonArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated candidate counts.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, default_value = "bon")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "gradcheck")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryCheckArgs {
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "theory")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct McCheckArgs {
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "mc")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Training data; its tail is held out unless `--eval` is given.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "ablate")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

fn parse_mode(s: &str) -> Result<LossMode, String> {
    match s {
        "stochastic" => Ok(LossMode::Stochastic),
        "expected" => Ok(LossMode::Expected),
        other => Err(format!("unknown mode `{other}` (stochastic or expected)")),
    }
}

/// Resolves a relative output path against the output directory, taken from
/// the environment first and the config second.
pub(crate) fn resolve_out(config: &Config, out: &Path) -> PathBuf {
    if out.is_absolute() {
        return out.to_path_buf();
    }
    let dir = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| config.run.out_dir.as_ref().map(PathBuf::from));
    match dir {
        Some(d) => d.join(out),
        None => out.to_path_buf(),
    }
}

/// `path` with `suffix` appended to its final component.
pub(crate) fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn worker_count(cli: &Cli, config: &Config) -> Result<Option<usize>, CliError> {
    if let Some(n) = cli.workers {
        return if n == 0 {
            Err(CliError::Config("--workers must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    if let Some(v) = std::env::var_os(WORKERS_ENV).filter(|v| !v.is_empty()) {
        let n = v
            .to_str()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer")))?;
        return Ok(Some(n));
    }
    Ok(config.run.workers)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    commands::apply_overrides(&mut config, &cli.command);
    config.validate()?;
    let workers = worker_count(&cli, &config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli, &config))
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
