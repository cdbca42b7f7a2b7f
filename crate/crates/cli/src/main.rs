//! `qtomo`: simulate probe signals, reconstruct qutrit states, run fidelity sweeps.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model validity violated: {0} (use --force to run anyway)")]
    Validity(String),
    #[error("minimizer did not converge; result written to {0}")]
    NotConverged(String),
    #[error(transparent)]
    Model(#[from] qtomo::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validity(_) => 3,
            CliError::NotConverged(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qtomo", version, about = "Optical tomography of an atomic qutrit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Run even when the configuration violates the model's validity conditions.
    #[arg(long, global = true)]
    pub force: bool,
    /// Generate signals with the master-equation integrator.
    #[arg(long, global = true)]
    pub integrator: bool,
    /// Also write SVG plots of sweep tables.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one noisy signal trace (CSV + meta JSON) per pulse.
    Simulate,
    /// Reconstruct a state from trace files, or run the whole pipeline on the configured state.
    Reconstruct {
        /// Trace CSV files or directories holding them.
        traces: Vec<PathBuf>,
        /// True state, for reporting fidelity.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Fidelity statistics along one parameter axis.
    Sweep,
    /// Regenerate the full set of figure data.
    PaperFigures {
        /// Small sample counts, for smoke tests.
        #[arg(long)]
        quick: bool,
    },
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("QTOMO_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("QTOMO_THREADS must be a positive integer, got `{v}`")))?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = set_threads().and_then(|_| match &cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::Reconstruct { traces, truth } => commands::reconstruct(&cli.common, traces, truth.as_deref()),
        Command::Sweep => commands::sweep(&cli.common),
        Command::PaperFigures { quick } => commands::paper_figures(&cli.common, *quick),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
