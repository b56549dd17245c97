//! Batch experiment driver: data generation, representation pretraining,
//! imitation, evaluation, oracle checks and report aggregation.

pub mod commands;
pub mod config;
pub mod oracle_check;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags or configuration.
    Config(String),
    Io(String),
    Divergence(String),
    /// An oracle identity missed its tolerance.
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Oracle(_) => 5,
        }
    }

    pub fn from_core(e: reprdice::Error) -> Self {
        use reprdice::Error as E;
        match e {
            E::Io(_) | E::Parse(_) | E::Checksum | E::Version(_) => CliError::Io(e.to_string()),
            E::Divergence { .. } | E::NonFiniteLoss { .. } | E::NonFinite(_) => CliError::Divergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }

    pub fn io(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Divergence(m) => write!(f, "training diverged: {m}"),
            CliError::Oracle(m) => write!(f, "oracle identity failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(
    name = "reprdice",
    version,
    about = "Representation-based offline imitation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the expert and general datasets.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn φ and μ from the general dataset.
    Pretrain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an imitation policy on the expert dataset.
    Imitate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        bundle: PathBuf,
        /// bc, valuedice or repr_valuedice.
        #[arg(long)]
        algorithm: String,
        /// Representation checkpoint (required for repr_valuedice).
        #[arg(long)]
        repr: Option<PathBuf>,
        /// Seed range `A..B` (exclusive end); one `seed-N` run directory each.
        #[arg(long, conflicts_with = "seed")]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a saved policy and compute exact metrics.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Number of rollouts, overriding `eval.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the oracle identities on the configured tabular instances.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Aggregate imitation runs into mean/std curves.
    Report {
        /// Run directories, or directories of `seed-N` runs.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    commands::dispatch(cli.command)
}
