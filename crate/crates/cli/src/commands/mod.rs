pub mod bench;
pub mod generate;
pub mod info;
pub mod oracle_check;
pub mod solve;
pub mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{digest_file, RunManifest, MANIFEST_FILE};
use crate::output::{ensure_dir, write_json};

/// What a command produced. `success = false` maps to exit code 1 after all
/// outputs (including partial ones) have been written.
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub success: bool,
}

/// A fully resolved, replayable command invocation.
pub trait Command: Serialize + DeserializeOwned {
    const NAME: &'static str;

    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }

    fn seed(&self) -> u64;

    fn run(&self, out_dir: &Path) -> CliResult<Outcome>;
}

pub fn execute<C: Command>(cfg: &C, out_dir: &Path) -> CliResult<ExitCode> {
    let start = Instant::now();
    let inputs = cfg
        .inputs()
        .iter()
        .map(|p| digest_file(p))
        .collect::<CliResult<Vec<_>>>()?;
    ensure_dir(out_dir)?;
    let outcome = cfg.run(out_dir)?;
    let code = if outcome.success { 0 } else { 1 };
    let config = serde_json::to_value(cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut manifest = RunManifest::new(C::NAME, config, inputs, cfg.seed());
    manifest.finish(&outcome.outputs, start.elapsed(), code);
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(ExitCode::from(code))
}

/// Replays the run recorded in `manifest_path`, writing into `out_dir`.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> CliResult<ExitCode> {
    let manifest = RunManifest::load(manifest_path)?;
    manifest.check_inputs()?;
    fn replay<C: Command>(m: &RunManifest, out_dir: &Path) -> CliResult<ExitCode> {
        let cfg: C = serde_json::from_value(m.config.clone())
            .map_err(|e| CliError::Usage(format!("manifest config for '{}' is invalid: {e}", m.command)))?;
        execute(&cfg, out_dir)
    }
    match manifest.command.as_str() {
        solve::SolveConfig::NAME => replay::<solve::SolveConfig>(&manifest, out_dir),
        oracle_check::OracleCheckConfig::NAME => replay::<oracle_check::OracleCheckConfig>(&manifest, out_dir),
        bench::BenchConfig::NAME => replay::<bench::BenchConfig>(&manifest, out_dir),
        train::TrainToyConfig::NAME => replay::<train::TrainToyConfig>(&manifest, out_dir),
        generate::GenerateConfig::NAME => replay::<generate::GenerateConfig>(&manifest, out_dir),
        other => Err(CliError::Usage(format!("manifest names unknown command '{other}'"))),
    }
}

/// Clap value parser for `beta`.
pub fn parse_beta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("beta must lie in [0,1), got {v}"))
    }
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite number > 0, got {v}"))
    }
}

pub fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite number >= 0, got {v}"))
    }
}
