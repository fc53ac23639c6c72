use std::path::{Path, PathBuf};

use clap::Args;
use mira_core::io::SCHEMA_VERSION;
use mira_core::trainer::{train, BlobConfig, EncoderState, TrainConfig};
use serde::{Deserialize, Serialize};

use super::{parse_non_negative, Command, Outcome};
use crate::error::{CliError, CliResult};
use crate::output::{write_json, write_records};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON file `{"train": {...}, "data": {...}}`; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_non_negative)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_non_negative)]
    pub augment_noise: Option<f64>,
    /// Number of blob points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(short, long, default_value = "mira-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainToyConfig {
    pub train: TrainConfig,
    pub data: BlobConfig,
}

impl TrainToyConfig {
    pub fn resolve(a: &TrainArgs) -> CliResult<Self> {
        let mut cfg = match &a.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => Self::default(),
        };
        let t = &mut cfg.train;
        t.seed = a.seed.unwrap_or(t.seed);
        t.epochs = a.epochs.unwrap_or(t.epochs);
        t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
        t.batch_size = a.batch_size.unwrap_or(t.batch_size);
        t.augment_noise = a.augment_noise.unwrap_or(t.augment_noise);
        cfg.data.points = a.points.unwrap_or(cfg.data.points);
        cfg.data.seed = a.data_seed.unwrap_or(cfg.data.seed);
        cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    schema_version: u32,
    input_dim: usize,
    embed_dim: usize,
    num_prototypes: usize,
    epochs_completed: usize,
    diverged_at: Option<usize>,
    state: &'a EncoderState,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

impl Command for TrainToyConfig {
    const NAME: &'static str = "train-toy";

    fn seed(&self) -> u64 {
        self.train.seed
    }

    fn run(&self, out_dir: &Path) -> CliResult<Outcome> {
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let data = self.data.generate().map_err(|e| CliError::Usage(e.to_string()))?;
        let run = train(&data, &self.train)?;
        let checkpoint = Checkpoint {
            schema_version: SCHEMA_VERSION,
            input_dim: run.state.projection.rows(),
            embed_dim: run.state.projection.cols(),
            num_prototypes: run.state.num_prototypes(),
            epochs_completed: run.history.len(),
            diverged_at: run.diverged_at,
            state: &run.state,
        };
        let outputs = vec![
            write_records(&out_dir.join(HISTORY_FILE), &run.history)?,
            write_json(&out_dir.join(CHECKPOINT_FILE), &checkpoint)?,
        ];
        match (run.diverged_at, run.history.last()) {
            (Some(epoch), _) => eprintln!("error: training diverged at epoch {epoch}; partial history written"),
            (None, Some(last)) => println!(
                "trained {} epochs: loss {:.4}, accuracy {:.4}, marginal entropy {:.4}",
                last.epoch, last.loss, last.accuracy, last.marg_entropy
            ),
            (None, None) => {}
        }
        Ok(Outcome {
            outputs,
            success: run.diverged_at.is_none(),
        })
    }
}
