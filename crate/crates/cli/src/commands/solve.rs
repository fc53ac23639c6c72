use std::path::{Path, PathBuf};

use clap::Args;
use mira_core::io::{read_matrix, SCHEMA_VERSION};
use mira_core::solver::{solve, solve_from_logits};
use mira_core::{LogitMatrix, ObjectiveBreakdown, ProbMatrix, SolverConfig};
use serde::{Deserialize, Serialize};

use super::{parse_beta, parse_non_negative, parse_positive, Command, Outcome};
use crate::error::{CliError, CliResult};
use crate::output::{write_json, write_matrix_file};

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Probability matrix (rows sum to 1) or logits with --logits; CSV or .json.
    pub input: PathBuf,
    #[arg(long, default_value_t = 2.0 / 3.0, value_parser = parse_beta)]
    pub beta: f64,
    /// Target temperature; only used with --logits.
    #[arg(long, default_value_t = 0.225, value_parser = parse_positive)]
    pub tau_t: f64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    /// Stop early once the per-step SSE of the marginal falls below this.
    #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
    pub tol: f64,
    /// Treat the input as logits and apply softmax(x / tau_t) first.
    #[arg(long)]
    pub logits: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "mira-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub input: PathBuf,
    pub logits: bool,
    pub solver: SolverConfig,
}

impl From<&SolveArgs> for SolveConfig {
    fn from(a: &SolveArgs) -> Self {
        Self {
            input: a.input.clone(),
            logits: a.logits,
            solver: SolverConfig {
                beta: a.beta,
                tau_t: a.tau_t,
                max_iters: a.iters as usize,
                tol: a.tol,
                seed: a.seed,
            },
        }
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema_version: u32,
    rows: usize,
    cols: usize,
    beta: f64,
    tau_t: Option<f64>,
    iterations_run: usize,
    final_step_sse: f64,
    kkt_residual: f64,
    breakdown: &'a ObjectiveBreakdown,
    marginal: &'a [f64],
}

pub const ASSIGNMENT_FILE: &str = "assignment.csv";
pub const RESULT_FILE: &str = "result.json";

impl Command for SolveConfig {
    const NAME: &'static str = "solve";

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.input.clone()]
    }

    fn seed(&self) -> u64 {
        self.solver.seed
    }

    fn run(&self, out_dir: &Path) -> CliResult<Outcome> {
        self.solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let m = read_matrix(&self.input).map_err(CliError::input(&self.input))?;
        let result = if self.logits {
            let logits = LogitMatrix::new(m).map_err(CliError::input(&self.input))?;
            solve_from_logits(&logits, &self.solver)?
        } else {
            let p = ProbMatrix::new(m).map_err(CliError::input(&self.input))?;
            solve(&p, &self.solver)?
        };
        let (rows, cols) = result.assignment.shape();
        let report = SolveReport {
            schema_version: SCHEMA_VERSION,
            rows,
            cols,
            beta: self.solver.beta,
            tau_t: self.logits.then_some(self.solver.tau_t),
            iterations_run: result.iterations_run,
            final_step_sse: result.final_step_sse,
            kkt_residual: result.kkt_residual,
            breakdown: &result.breakdown,
            marginal: result.marginal.as_slice(),
        };
        let outputs = vec![
            write_matrix_file(&out_dir.join(ASSIGNMENT_FILE), result.assignment.matrix())?,
            write_json(&out_dir.join(RESULT_FILE), &report)?,
        ];
        println!(
            "solved {rows}x{cols} in {} iterations: kkt_residual {:e}, objective {}",
            result.iterations_run, result.kkt_residual, result.breakdown.total
        );
        Ok(Outcome { outputs, success: true })
    }
}
