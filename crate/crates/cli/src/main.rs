//! `raselab`: simulate RASE shot sets, analyse them, and regenerate the data
//! behind each figure.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 1 runtime failure.

mod commands;
mod output;
mod reproduce;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<raselab::Error> for CliError {
    fn from(e: raselab::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "raselab", version, about = "RASE quantum-memory simulator and analysis workbench")]
struct Cli {
    /// Worker threads (falls back to RASELAB_THREADS, then all cores).
    #[arg(long, global = true, env = "RASELAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

/// Flags shared by commands that run a seeded simulation.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment configuration JSON; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shot count, overriding the configuration.
    #[arg(long)]
    pub shots: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a pulse sequence as JSON and as an ASCII timeline.
    Sequence(commands::SequenceArgs),
    /// Synthesise a shot-set directory.
    Simulate(commands::SimulateArgs),
    /// Recall efficiency against gain from the MBE and closed-form models.
    EffCurve(commands::EffCurveArgs),
    /// Fit a Voigt (and optional field-gradient) decay to echo amplitudes.
    FitDecay(commands::FitDecayArgs),
    /// Analyse a shot-set directory.
    #[command(subcommand)]
    Analyze(commands::AnalyzeCmd),
    /// Memory bandwidth and spectro-temporal mode capacity.
    Capacity(commands::CapacityArgs),
    /// Regenerate the data behind one figure.
    Reproduce(reproduce::ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Clock {
    Write,
    Storage,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.cmd {
        Command::Sequence(a) => commands::sequence(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::EffCurve(a) => commands::eff_curve(a),
        Command::FitDecay(a) => commands::fit_decay(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Capacity(a) => commands::capacity(a),
        Command::Reproduce(a) => reproduce::reproduce(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
