use std::path::{Path, PathBuf};

use clap::Args;
use mira_core::matrix::{random_logits, softmax_with_temperature};
use serde::{Deserialize, Serialize};

use super::{parse_non_negative, Command, Outcome};
use crate::error::{CliError, CliResult};
use crate::output::write_matrix_file;

/// Writes a seeded random instance: Gaussian logits, or their softmax.
#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    /// Standard deviation of the logits.
    #[arg(long, default_value_t = 1.0, value_parser = parse_non_negative)]
    pub sharpness: f64,
    /// Write the logits instead of probabilities.
    #[arg(long)]
    pub logits: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File name inside the output directory; `.json` selects the JSON envelope.
    #[arg(long, default_value = "instance.csv")]
    pub name: String,
    #[arg(short, long, default_value = "mira-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub rows: usize,
    pub cols: usize,
    pub sharpness: f64,
    pub logits: bool,
    pub seed: u64,
    pub name: String,
}

impl From<&GenerateArgs> for GenerateConfig {
    fn from(a: &GenerateArgs) -> Self {
        Self {
            rows: a.rows,
            cols: a.cols,
            sharpness: a.sharpness,
            logits: a.logits,
            seed: a.seed,
            name: a.name.clone(),
        }
    }
}

impl Command for GenerateConfig {
    const NAME: &'static str = "generate";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn run(&self, out_dir: &Path) -> CliResult<Outcome> {
        if Path::new(&self.name).components().count() != 1 {
            return Err(CliError::Usage(format!("--name '{}' must be a plain file name", self.name)));
        }
        let logits =
            random_logits(self.rows, self.cols, self.sharpness, self.seed).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = out_dir.join(&self.name);
        let out = if self.logits {
            write_matrix_file(&path, logits.matrix())?
        } else {
            write_matrix_file(&path, softmax_with_temperature(&logits, 1.0)?.matrix())?
        };
        println!("wrote {}x{} {} to {}", self.rows, self.cols, if self.logits { "logits" } else { "probabilities" }, out.display());
        Ok(Outcome {
            outputs: vec![out],
            success: true,
        })
    }
}
