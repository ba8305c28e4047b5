//! `qkt`: recurrence checks, QFI traces, Husimi snapshots and figure bundles.

mod commands;
mod config;
mod expr;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qkt_core::QktError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("no recurrence found within {0} periods")]
    NoRecurrence(u32),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Core(#[from] QktError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NoRecurrence(_) | CliError::ChecksFailed(_) => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(QktError::Io(_)) | CliError::Io(_) => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qkt", version, about = "Quantum kicked top: resonances, Fisher information and phase space")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Global {
    /// TOML file with the same keys as the flags; it wins on conflict.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Ignore and do not write the sweep cache.
    #[arg(long, global = true)]
    #[serde(default)]
    no_cache: bool,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find the smallest n with U^n proportional to the identity.
    Recurrence(RecurrenceArgs),
    /// Write QFI traces for one or more spin counts.
    Qfi(QfiArgs),
    /// Husimi grids at selected periods with peak counts.
    Husimi(HusimiArgs),
    /// Run a figure pipeline and write a bundle.
    Reproduce(ReproduceArgs),
}

/// Expressions may use `pi`, `j` and `delta`, e.g. `pi*j/2`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RecurrenceArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Resonance shorthand `r/s` for beta = 4 pi j r / s.
    #[arg(long, conflicts_with = "beta")]
    resonance: Option<String>,
    #[arg(long)]
    max_period: Option<String>,
    #[arg(long)]
    tol: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct QfiArgs {
    /// Spin count or comma-separated list.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Defaults to `pi*j+delta`.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    /// pure-exact, pure-echo or dissipative.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    substeps: Option<String>,
    /// Comma-separated finite-difference ladder.
    #[arg(long)]
    epsilons: Option<String>,
    /// Checkpoint alignment after the dense prefix.
    #[arg(long)]
    stride: Option<String>,
    /// Fit a time power law from this step on.
    #[arg(long)]
    fit_from: Option<String>,
    #[arg(long)]
    #[serde(default)]
    fit: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HusimiArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    /// Comma-separated periods.
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    n_theta: Option<String>,
    #[arg(long)]
    n_phi: Option<String>,
    /// Peak threshold relative to the grid maximum.
    #[arg(long)]
    threshold: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    /// fig2, fig3a, fig3b, fig4a, fig4b or fig4c.
    figure: Option<String>,
    /// Required for fig3 and fig4: use the reduced N ladders.
    #[arg(long)]
    #[serde(default)]
    desk_scale: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut file = match &cli.global.config {
        Some(p) => config::load(p)?,
        None => Default::default(),
    };
    let global = config::overlay(cli.global.clone(), &mut file)?;
    match cli.command {
        Command::Recurrence(a) => {
            let a = config::overlay(a, &mut file)?;
            config::reject_unused(&file)?;
            commands::recurrence(&global, a)
        }
        Command::Qfi(a) => {
            let a = config::overlay(a, &mut file)?;
            config::reject_unused(&file)?;
            commands::qfi(&global, a)
        }
        Command::Husimi(a) => {
            let a = config::overlay(a, &mut file)?;
            config::reject_unused(&file)?;
            commands::husimi(&global, a)
        }
        Command::Reproduce(a) => {
            let a = config::overlay(a, &mut file)?;
            config::reject_unused(&file)?;
            commands::reproduce(&global, a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
