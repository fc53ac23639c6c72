//! File writers shared by the commands. All outputs are written with fixed
//! ordering and shortest round-trip float formatting so reruns are
//! byte-identical.

use std::path::{Path, PathBuf};

use mira_core::io::write_matrix;
use mira_core::Matrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))?;
    Ok(path.to_path_buf())
}

/// Header row from the record's field names.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> CliResult<PathBuf> {
    let to_err = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut wtr = csv::Writer::from_path(path).map_err(to_err)?;
    for r in records {
        wtr.serialize(r).map_err(to_err)?;
    }
    wtr.flush().map_err(CliError::io(path))?;
    Ok(path.to_path_buf())
}

pub fn write_matrix_file(path: &Path, m: &Matrix) -> CliResult<PathBuf> {
    write_matrix(m, path).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(path.to_path_buf())
}
