mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, execute, generate, info, oracle_check, rerun, solve, train};
use error::CliResult;

/// Mutual-information-regularized pseudo-label assignment.
///
/// Exit codes: 0 success, 1 computation failure, 2 usage or input error.
#[derive(Parser, Debug)]
#[command(name = "mira", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve for the assignment of one batch.
    Solve(solve::SolveArgs),
    /// Cross-check the solver against the reference optimizers, or certify a given assignment.
    OracleCheck(oracle_check::OracleCheckArgs),
    /// Convergence traces of the fixed-point iteration and Sinkhorn-Knopp.
    ConvergenceBench(bench::BenchArgs),
    /// Train the toy encoder on Gaussian blobs.
    TrainToy(train::TrainArgs),
    /// Write a seeded random instance.
    Generate(generate::GenerateArgs),
    /// Show version and defaults, or validate a matrix file.
    Info(info::InfoArgs),
    /// Re-run a command from its manifest.json.
    Rerun {
        manifest: PathBuf,
        #[arg(short, long, default_value = "mira-out")]
        out_dir: PathBuf,
    },
}

fn dispatch(cmd: Cmd) -> CliResult<ExitCode> {
    match cmd {
        Cmd::Solve(a) => execute(&solve::SolveConfig::from(&a), &a.out_dir),
        Cmd::OracleCheck(a) => execute(&oracle_check::OracleCheckConfig::from(&a), &a.out_dir),
        Cmd::ConvergenceBench(a) => execute(&bench::BenchConfig::from(&a), &a.out_dir),
        Cmd::TrainToy(a) => execute(&train::TrainToyConfig::resolve(&a)?, &a.out_dir),
        Cmd::Generate(a) => execute(&generate::GenerateConfig::from(&a), &a.out_dir),
        Cmd::Info(a) => info::run(&a).map(|()| ExitCode::SUCCESS),
        Cmd::Rerun { manifest, out_dir } => rerun(&manifest, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
