//! Matrix exchange formats.
//!
//! CSV: one row per line, no header, `.` decimal point, values printed with
//! the shortest representation that round-trips. JSON: an envelope
//! `{"schema_version", "rows", "cols", "data"}` with `data` row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MiraError, Result};
use crate::matrix::Matrix;

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEnvelope {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl From<&Matrix> for MatrixEnvelope {
    fn from(m: &Matrix) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl TryFrom<MatrixEnvelope> for Matrix {
    type Error = MiraError;

    fn try_from(env: MatrixEnvelope) -> Result<Self> {
        Matrix::new(env.rows, env.cols, env.data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    /// `.json` means JSON; anything else is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

fn parse_err(what: impl std::fmt::Display) -> MiraError {
    MiraError::Parse(what.to_string())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(parse_err)?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(format!(
                    "row {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("row {}: '{field}' is not a number", line + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err("empty matrix"))?;
    Matrix::new(rows, cols, data)
}

pub fn write_csv<W: Write>(m: &Matrix, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))
            .map_err(parse_err)?;
    }
    wtr.flush().map_err(parse_err)
}

pub fn read_json<R: Read>(reader: R) -> Result<Matrix> {
    let env: MatrixEnvelope = serde_json::from_reader(reader).map_err(parse_err)?;
    Matrix::try_from(env)
}

pub fn write_json<W: Write>(m: &Matrix, writer: W) -> Result<()> {
    serde_json::to_writer(writer, &MatrixEnvelope::from(m)).map_err(parse_err)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => read_csv(reader),
        MatrixFormat::Json => read_json(reader),
    }
    .map_err(|e| match e {
        MiraError::Parse(msg) => parse_err(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => write_csv(m, &mut writer)?,
        MatrixFormat::Json => write_json(m, &mut writer)?,
    }
    writer.flush().map_err(parse_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gaussian_matrix, seeded_rng};

    #[test]
    fn csv_round_trip_is_exact() {
        let m = gaussian_matrix(7, 5, 3.0, &mut seeded_rng(1)).map(|v| v * 1e-7);
        let mut buf = Vec::new();
        write_csv(&m, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = gaussian_matrix(3, 4, 1.0, &mut seeded_rng(2));
        let mut buf = Vec::new();
        write_json(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        assert_eq!(read_json(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn json_parsing_is_correctly_rounded() {
        // neighbours that a fast, inexact decimal parser confuses
        let vals = [8.400991535761904e-8, 8.400991535761905e-8, 0.1 + 0.2, 2.2250738585072014e-308, 1.0 - f64::EPSILON / 2.0];
        let m = Matrix::new(1, vals.len(), vals.to_vec()).unwrap();
        let mut buf = Vec::new();
        write_json(&m, &mut buf).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap().as_slice(), &vals);
    }

    #[test]
    fn json_without_schema_version_is_accepted() {
        let m = read_json(r#"{"rows":1,"cols":2,"data":[0.25,0.75]}"#.as_bytes()).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
    }

    #[test]
    fn csv_rejects_ragged_and_garbage() {
        assert!(matches!(read_csv("1,2\n3\n".as_bytes()), Err(MiraError::Parse(_))));
        assert!(matches!(read_csv("1,x\n".as_bytes()), Err(MiraError::Parse(_))));
        assert!(matches!(read_csv("".as_bytes()), Err(MiraError::Parse(_))));
        assert!(read_json(r#"{"rows":2,"cols":2,"data":[1]}"#.as_bytes()).is_err());
    }

    #[test]
    fn csv_tolerates_whitespace_and_comments() {
        let m = read_csv("# header comment\n 0.5 , 0.5\n1e-3,0.999\n".as_bytes()).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.get(1, 0), 1e-3);
    }
}
