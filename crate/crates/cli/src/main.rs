//! Command-line front end: dataset generation, scoring, training,
//! evaluation and a few diagnostics, all wired to the library crate.

mod analyze;
mod anchors;
mod eval;
mod gradcheck;
mod score;
mod simulate;
mod svg;
mod threads;
mod train;

use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use vigil_core::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Per-frame suspicion scoring over detected action events",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset
    Simulate(simulate::SimulateArgs),
    /// Score one event track into a suspicion curve CSV
    Score(score::ScoreArgs),
    /// Fit the coefficient modulator on a generated dataset
    Train(train::TrainArgs),
    /// Compare predicted curves against reference curves
    Eval(eval::EvalArgs),
    /// Autocorrelation and cumulative statistics of one curve
    Analyze(analyze::AnalyzeArgs),
    /// Pairwise similarity report for a concept anchor bank
    Anchors(anchors::AnchorsArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(gradcheck::GradcheckArgs),
}

/// Loads the run configuration, or falls back to built-in defaults when no
/// path was given.
fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Creates the parent directory of an output file if needed.
fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    Ok(())
}

/// 2 for data/usage problems surfaced by the library, 3 for numeric
/// failures (diverged training, failed gradient check).
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout and usage errors on
            // stderr by itself
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::Score(args) => score::run(&args),
        Command::Train(args) => train::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::Analyze(args) => analyze::run(&args),
        Command::Anchors(args) => anchors::run(&args),
        Command::Gradcheck(args) => gradcheck::run(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
