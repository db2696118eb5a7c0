//! `fracheat`: runs one experiment pipeline from a TOML config.
//!
//! Exit codes: 0 success, 2 invalid config, 3 optimiser did not converge,
//! 4 numerical failure, 1 anything else.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::ExperimentConfig;
use crate::output::Artifacts;

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Exterior control experiments for fractional heat and wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Assemble the operator and compare it with the FFT and spectral references.
    Operator,
    /// Synthesise one control and verify it.
    Control,
    /// Cost against ε, warm-started.
    Sweep,
    /// Singular values of the control map.
    Gramian,
    /// Extension trace against the direct operator.
    ExtensionCheck,
    /// Propagation-of-smallness ensemble.
    Smallness,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Operator => "operator",
            Command::Control => "control",
            Command::Sweep => "sweep",
            Command::Gramian => "gramian",
            Command::ExtensionCheck => "extension-check",
            Command::Smallness => "smallness",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

pub enum Status {
    Done,
    NotConverged(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<fracheat::Error> for Failure {
    fn from(e: fracheat::Error) -> Self {
        use fracheat::Error as E;
        match e {
            E::InvalidGrid(_)
            | E::InvalidRegion(_)
            | E::UnresolvedCutoff(_)
            | E::EmptyMask
            | E::ShapeMismatch(_)
            | E::InvalidParameter { .. }
            | E::OverBudget { .. }
            | E::Format(_) => Failure::Config(e.to_string()),
            E::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

fn execute(cli: &Cli) -> Result<Status, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let (mut config, base) = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output`".into()))?;
    let run = Run {
        config: &config,
        base: &base,
        verbose: cli.verbose,
    };
    let start = Instant::now();
    let mut art = Artifacts::create(&out)?;
    let status = match cli.command {
        Command::Operator => commands::operator(&run, &mut art),
        Command::Control => commands::control(&run, &mut art),
        Command::Sweep => commands::sweep(&run, &mut art),
        Command::Gramian => commands::gramian(&run, &mut art),
        Command::ExtensionCheck => commands::extension_check(&run, &mut art),
        Command::Smallness => commands::smallness(&run, &mut art),
    }?;
    art.finish(cli.command.name(), &config, start.elapsed())?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(msg)) => {
            eprintln!("fracheat {}: not converged: {msg}", cli.command.name());
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("fracheat {}: {e}", cli.command.name());
            ExitCode::from(e.code())
        }
    }
}
