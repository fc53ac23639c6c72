use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use mira_core::io::SCHEMA_VERSION;
use mira_core::matrix::random_instance;
use mira_core::sinkhorn::{convergence_trace, iterations_to, TraceMethod, TraceRecord};
use serde::{Deserialize, Serialize};

use super::{parse_beta, parse_non_negative, parse_positive, Command, Outcome};
use crate::error::{CliError, CliResult};
use crate::output::{write_json, write_records};

/// `B x K` batch shape, written `512x256`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (b, k) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("size '{s}' must look like 512x256"))?;
        let rows: usize = b.trim().parse().map_err(|_| format!("bad row count in '{s}'"))?;
        let cols: usize = k.trim().parse().map_err(|_| format!("bad column count in '{s}'"))?;
        if rows == 0 || cols < 2 {
            return Err(format!("size '{s}' needs B >= 1 and K >= 2"));
        }
        Ok(Self { rows, cols })
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "512x256")]
    pub sizes: Vec<Size>,
    #[arg(long, value_delimiter = ',', default_value = "0.6666666666666666", value_parser = parse_beta)]
    pub betas: Vec<f64>,
    /// Sinkhorn entropic temperatures.
    #[arg(long, value_delimiter = ',', default_value = "0.05", value_parser = parse_positive)]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Iterations recorded per run.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    /// Iterations used to compute the reference solution.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub ref_iters: u64,
    /// Standard deviation of the random logits behind each instance.
    #[arg(long, default_value_t = 1.0, value_parser = parse_non_negative)]
    pub sharpness: f64,
    /// SSE-to-reference threshold reported in the summary.
    #[arg(long, default_value_t = 1e-8, value_parser = parse_positive)]
    pub threshold: f64,
    #[arg(short, long, default_value = "mira-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<Size>,
    pub betas: Vec<f64>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub iters: usize,
    pub ref_iters: usize,
    pub sharpness: f64,
    pub threshold: f64,
}

impl From<&BenchArgs> for BenchConfig {
    fn from(a: &BenchArgs) -> Self {
        Self {
            sizes: a.sizes.clone(),
            betas: a.betas.clone(),
            eps: a.eps.clone(),
            seeds: a.seeds.clone(),
            iters: a.iters as usize,
            ref_iters: a.ref_iters as usize,
            sharpness: a.sharpness,
            threshold: a.threshold,
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    file: String,
    #[serde(flatten)]
    method: TraceMethod,
    rows: usize,
    cols: usize,
    seed: u64,
    iterations_to_threshold: Option<usize>,
    final_sse_to_reference: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    schema_version: u32,
    threshold: f64,
    iters: usize,
    ref_iters: usize,
    runs: Vec<RunSummary>,
}

/// CSV row; `objective_total` is empty for Sinkhorn runs.
#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    step_sse: f64,
    sse_to_reference: f64,
    objective_total: Option<f64>,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        Self {
            iteration: r.iteration,
            step_sse: r.step_sse,
            sse_to_reference: r.sse_to_reference,
            objective_total: r.objective_total,
        }
    }
}

pub const SUMMARY_FILE: &str = "bench_summary.json";

impl Command for BenchConfig {
    const NAME: &'static str = "convergence-bench";

    fn seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    fn run(&self, out_dir: &Path) -> CliResult<Outcome> {
        if self.ref_iters < self.iters {
            return Err(CliError::Usage(format!(
                "--ref-iters ({}) must be at least --iters ({})",
                self.ref_iters, self.iters
            )));
        }
        let mut methods: Vec<TraceMethod> = self.betas.iter().map(|&beta| TraceMethod::Mira { beta }).collect();
        methods.extend(self.eps.iter().map(|&epsilon| TraceMethod::Sinkhorn { epsilon }));

        let mut outputs = Vec::new();
        let mut runs = Vec::new();
        for size in &self.sizes {
            for &seed in &self.seeds {
                let p = random_instance(size.rows, size.cols, self.sharpness, seed)?;
                for method in &methods {
                    let trace = convergence_trace(*method, &p, self.iters, self.ref_iters)?;
                    let file = format!(
                        "run{:03}_{}_b{}_k{}_seed{seed}.csv",
                        runs.len(),
                        method.name(),
                        size.rows,
                        size.cols
                    );
                    let rows: Vec<TraceRow> = trace.iter().map(TraceRow::from).collect();
                    outputs.push(write_records(&out_dir.join(&file), &rows)?);
                    let hit = iterations_to(&trace, self.threshold);
                    println!(
                        "{file}: iterations to {:e} = {}",
                        self.threshold,
                        hit.map_or("not reached".to_string(), |n| n.to_string())
                    );
                    runs.push(RunSummary {
                        file,
                        method: *method,
                        rows: size.rows,
                        cols: size.cols,
                        seed,
                        iterations_to_threshold: hit,
                        final_sse_to_reference: trace.last().map_or(f64::NAN, |r| r.sse_to_reference),
                    });
                }
            }
        }
        let summary = BenchSummary {
            schema_version: SCHEMA_VERSION,
            threshold: self.threshold,
            iters: self.iters,
            ref_iters: self.ref_iters,
            runs,
        };
        outputs.push(write_json(&out_dir.join(SUMMARY_FILE), &summary)?);
        Ok(Outcome { outputs, success: true })
    }
}
