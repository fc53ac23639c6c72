//! Run manifests: what was run, on which inputs, and how long it took.
//!
//! The manifest sits beside the outputs as `manifest.json`. It is the only
//! file whose contents change between identical runs (the duration field).

use std::path::{Path, PathBuf};
use std::time::Duration;

use mira_core::io::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub duration_ms: f64,
    pub exit_code: u8,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        inputs: Vec<InputDigest>,
        seed: u64,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            inputs,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            duration_ms: 0.0,
            exit_code: 0,
        }
    }

    pub fn finish(&mut self, outputs: &[PathBuf], elapsed: Duration, exit_code: u8) {
        let mut names: Vec<String> = outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        names.sort();
        self.outputs = names;
        self.duration_ms = elapsed.as_secs_f64() * 1e3;
        self.exit_code = exit_code;
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Fails if any recorded input has changed since the manifest was written.
    pub fn check_inputs(&self) -> CliResult<()> {
        for input in &self.inputs {
            let now = digest_file(&input.path)?;
            if now.sha256 != input.sha256 {
                return Err(CliError::Failed(format!(
                    "input {} changed since the recorded run (sha256 {} != {})",
                    input.path.display(),
                    now.sha256,
                    input.sha256
                )));
            }
        }
        Ok(())
    }
}

pub fn digest_file(path: &Path) -> CliResult<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}
