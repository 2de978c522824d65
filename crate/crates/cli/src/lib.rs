//! Command-line front end for `hermproj-core`: identity suites, kernel
//! dumps, norm estimates and scaling sweeps, each writing plot-ready CSV
//! and a versioned JSON report into one output directory.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;

use clap::{Parser, Subcommand};
use hermproj_core::Error;

pub use config::{RunConfig, Slice};
pub use report::{Outcome, Report, Verdict, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "hermproj", version, about = "Hermite spectral projection laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase-geometry identities and finite-difference checks.
    PhaseCheck(RunConfig),
    /// Kernel of the projection by the eigenfunction sum and the Mehler route.
    Kernel(RunConfig),
    /// One mixed-norm estimate of a localized projection.
    Norm(RunConfig),
    /// Scaling sweeps with fitted exponents.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Multi-indices of one eigenspace.
    Basis(RunConfig),
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// Norm from L² to L^q over the full space against λ.
    Endpoint(RunConfig),
    /// L² norm of the shell-localized projection against the shell width.
    Mu(RunConfig),
    /// Normalized two-shell norm against the input shell width.
    Asym(RunConfig),
}

/// Failures that stop a command, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file.
    Config(String),
    Core(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(Error::Accuracy { .. }) => 1,
            CliError::Core(Error::Resource(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Runs an already parsed command line.
pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::PhaseCheck(c) => commands::phase_check(&c.layered()?),
        Command::Kernel(c) => commands::kernel(&c.layered()?),
        Command::Norm(c) => commands::norm(&c.layered()?),
        Command::Basis(c) => commands::basis(&c.layered()?),
        Command::Sweep { kind } => match kind {
            SweepKind::Endpoint(c) => commands::sweep_endpoint(&c.layered()?),
            SweepKind::Mu(c) => commands::sweep_mu(&c.layered()?),
            SweepKind::Asym(c) => commands::sweep_asym(&c.layered()?),
        },
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(cli)
}
