//! `loreg`: nodewise L0 precision matrix estimation, inference and simulation.

mod estimate;
mod evaluate;
mod infer;
mod output;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nodewise_loreg::Error;

#[derive(Parser)]
#[command(name = "loreg", version, about = "Sparse precision matrix estimation by nodewise L0 regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo experiment described by a JSON spec.
    Simulate(simulate::Args),
    /// Estimate a precision matrix from a data CSV.
    Estimate(estimate::Args),
    /// Entrywise inference and FDR thresholding for a saved estimate.
    Infer(infer::Args),
    /// Losses and support metrics against a known truth, or a rebuilt simulation report.
    Evaluate(evaluate::Args),
}

/// 1 for bad input, 2 for numerical breakdown, 3 for I/O.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        e if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Estimate(a) => estimate::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Evaluate(a) => evaluate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
