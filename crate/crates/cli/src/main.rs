//! `polyharm` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RawConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] polyharm::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use polyharm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e.root() {
                E::InvalidParams(_)
                | E::InvalidSpec(_)
                | E::WrongGeometry
                | E::OrderOutOfRange { .. } => 2,
                E::NotCoercive(_) => 3,
                E::NoConvergence(_) => 4,
                E::UnderResolved(_) => 5,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "polyharm",
    version,
    about = "Polyharmonic variational experiments"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<u32>,
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Comma-separated ε list for `testfn`.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Closed-form Sobolev constants.
    Sobolev,
    /// Truncated Euclidean Rayleigh quotient of the bubble.
    Rayleigh,
    /// Polyharmonic extension of the boundary data.
    Extend,
    /// Lowest clamped eigenpair with refinement.
    Eigen,
    /// Constrained minimizer at a single exponent.
    Minimize,
    /// Continuation along the exponent schedule.
    Continue,
    /// Concentrating test-function quotient study.
    Testfn,
    /// Continuation plus the strict energy inequality.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sobolev => "sobolev",
            Command::Rayleigh => "rayleigh",
            Command::Extend => "extend",
            Command::Eigen => "eigen",
            Command::Minimize => "minimize",
            Command::Continue => "continue",
            Command::Testfn => "testfn",
            Command::Check => "check",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    let overrides = Overrides {
        n: cli.n,
        k: cli.k,
        q: cli.q,
        gamma: cli.gamma,
        eps: cli.eps,
    };
    let cfg = raw.resolve(&overrides)?;
    output::write_manifest(&cfg, cli.command)?;
    commands::dispatch(cli.command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
