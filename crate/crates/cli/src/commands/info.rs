use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use mira_core::io::{read_matrix, SCHEMA_VERSION};
use mira_core::matrix::{validate_prob_matrix, ValidationReport};
use mira_core::oracle::{OracleConfig, GRID_MAX_ROWS};
use mira_core::sinkhorn::SinkhornConfig;
use mira_core::trainer::{BlobConfig, TrainConfig};
use mira_core::SolverConfig;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Prints version, defaults and, given a file, a validation report for it.
#[derive(Args, Debug)]
pub struct InfoArgs {
    pub input: Option<PathBuf>,
}

#[derive(Serialize)]
struct Defaults {
    solver: SolverConfig,
    oracle: OracleConfig,
    grid_max_rows: usize,
    sinkhorn: SinkhornConfig,
    train: TrainConfig,
    data: BlobConfig,
}

#[derive(Serialize)]
struct Info {
    schema_version: u32,
    tool_version: &'static str,
    defaults: Defaults,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<ValidationReport>,
}

pub fn run(args: &InfoArgs) -> CliResult<()> {
    let input = match &args.input {
        Some(path) => Some(validate_prob_matrix(&read_matrix(path).map_err(CliError::input(path))?)),
        None => None,
    };
    let info = Info {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        defaults: Defaults {
            solver: SolverConfig::default(),
            oracle: OracleConfig::default(),
            grid_max_rows: GRID_MAX_ROWS,
            sinkhorn: SinkhornConfig::default(),
            train: TrainConfig::default(),
            data: BlobConfig::default(),
        },
        input,
    };
    let text = serde_json::to_string_pretty(&info).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>")(e)),
        _ => Ok(()),
    }
}
