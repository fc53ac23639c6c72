//! Equipartition Sinkhorn-Knopp baseline and convergence traces.
//!
//! The kernel `M_ij = p_ij^(1/ε)` is scaled alternately so that every column
//! sums to `B/K` and every row sums to 1. The iteration runs on `log M` so
//! small `ε` cannot underflow the kernel.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{log_sum_exp, Matrix, ProbMatrix};
use crate::objective::{entropy, kl_term, marginal, mi_estimate, objective};
use crate::solver::{self, PowerKernel, SolverConfig};

/// Floor applied to model probabilities before Sinkhorn-Knopp.
pub const PROB_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic temperature; the kernel is `p^(1/epsilon)`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Length of the long run used as the reference point in traces.
    pub ref_iters: usize,
    /// Stop once every column sum is within `tol` of `B/K`; `0` disables.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iters: 100,
            ref_iters: 1000,
            tol: 0.0,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(param_err("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(param_err("max_iters", "must be >= 1"));
        }
        if self.ref_iters < self.max_iters {
            return Err(param_err("ref_iters", "must be >= max_iters"));
        }
        if !(self.tol >= 0.0) {
            return Err(param_err("tol", "must be >= 0"));
        }
        Ok(())
    }
}

/// Clamps entries below [`PROB_FLOOR`] and renormalizes rows.
pub fn floor_probs(p: &ProbMatrix) -> ProbMatrix {
    let mut m = p.matrix().map(|x| x.max(PROB_FLOOR));
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let s: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    ProbMatrix::from_normalized(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SinkhornSolution {
    /// Row-normalized state after the last iteration.
    pub assignment: ProbMatrix,
    pub iterations: usize,
    /// `max_j |Σ_i a_ij - B/K|` of the returned assignment.
    pub max_col_deviation: f64,
    /// `||A^(n) - A^(n-1)||²` per iteration, with `A^(0)` the row-normalized kernel.
    pub step_sse: Vec<f64>,
}

/// Log-domain Sinkhorn state.
struct LogScaling {
    log_a: Matrix,
    log_target: f64,
    scratch: Vec<f64>,
}

impl LogScaling {
    fn new(p: &ProbMatrix, epsilon: f64) -> Result<Self> {
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                if !(p.get(i, j) > 0.0) {
                    return Err(MiraError::NonPositiveKernel { row: i, col: j });
                }
            }
        }
        let mut s = Self {
            log_a: p.matrix().map(|x| x.ln() / epsilon),
            log_target: (p.rows() as f64 / p.cols() as f64).ln(),
            scratch: vec![0.0; p.rows()],
        };
        s.normalize_rows();
        Ok(s)
    }

    fn normalize_rows(&mut self) {
        for i in 0..self.log_a.rows() {
            let row = self.log_a.row_mut(i);
            let lse = log_sum_exp(row);
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
    }

    fn normalize_cols(&mut self) {
        let (rows, cols) = self.log_a.shape();
        for j in 0..cols {
            for i in 0..rows {
                self.scratch[i] = self.log_a.get(i, j);
            }
            let shift = self.log_target - log_sum_exp(&self.scratch);
            for i in 0..rows {
                let idx = i * cols + j;
                self.log_a.as_mut_slice()[idx] += shift;
            }
        }
    }

    fn step(&mut self) {
        self.normalize_cols();
        self.normalize_rows();
    }

    fn state(&self) -> Matrix {
        self.log_a.map(f64::exp)
    }
}

fn col_deviation(a: &Matrix) -> f64 {
    let target = a.rows() as f64 / a.cols() as f64;
    crate::matrix::column_sums(a, None)
        .into_iter()
        .map(|s| (s - target).abs())
        .fold(0.0, f64::max)
}

fn sq_dist(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

fn run_sinkhorn(
    p: &ProbMatrix,
    epsilon: f64,
    iters: usize,
    tol: f64,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<SinkhornSolution> {
    let mut s = LogScaling::new(p, epsilon)?;
    let mut prev = s.state();
    let mut step_sse = Vec::with_capacity(iters);
    for n in 1..=iters {
        s.step();
        let cur = s.state();
        step_sse.push(sq_dist(&cur, &prev));
        observe(n, &cur);
        prev = cur;
        if tol > 0.0 && col_deviation(&prev) <= tol {
            break;
        }
    }
    Ok(SinkhornSolution {
        max_col_deviation: col_deviation(&prev),
        iterations: step_sse.len(),
        assignment: ProbMatrix::from_normalized(prev),
        step_sse,
    })
}

/// Sinkhorn-Knopp with the equipartition column constraint `Σ_i a_ij = B/K`.
/// `P` must be strictly positive; see [`floor_probs`].
pub fn sinkhorn_solve(p: &ProbMatrix, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    cfg.validate()?;
    run_sinkhorn(p, cfg.epsilon, cfg.max_iters, cfg.tol, |_, _| {})
}

/// Which iteration a trace follows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum TraceMethod {
    /// Marginal fixed-point iteration; the traced state is the K-vector.
    Mira { beta: f64 },
    /// Sinkhorn-Knopp; the traced state is the full B x K assignment.
    Sinkhorn { epsilon: f64 },
}

impl TraceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TraceMethod::Mira { .. } => "mira",
            TraceMethod::Sinkhorn { .. } => "sinkhorn",
        }
    }
}

/// One row of a convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub step_sse: f64,
    pub sse_to_reference: f64,
    /// Objective of the assignment implied by the iterate (fixed-point runs only).
    pub objective_total: Option<f64>,
}

/// Records iterations `1..=iters`, measuring each state against the state
/// reached after `ref_iters` iterations.
pub fn convergence_trace(
    method: TraceMethod,
    p: &ProbMatrix,
    iters: usize,
    ref_iters: usize,
) -> Result<Vec<TraceRecord>> {
    if iters == 0 {
        return Err(param_err("iters", "must be >= 1"));
    }
    match method {
        TraceMethod::Mira { beta } => mira_trace(p, beta, iters, ref_iters),
        TraceMethod::Sinkhorn { epsilon } => sinkhorn_trace(p, epsilon, iters, ref_iters),
    }
}

fn mira_trace(p: &ProbMatrix, beta: f64, iters: usize, ref_iters: usize) -> Result<Vec<TraceRecord>> {
    let cfg = SolverConfig {
        beta,
        max_iters: iters.max(ref_iters),
        ..SolverConfig::default()
    };
    let fp = solver::fixed_point_solve(p, &cfg)?;
    let reference = &fp.trace.iterates[ref_iters.max(1)];
    let kernel = PowerKernel::from_probs(p, beta)?;
    (1..=iters)
        .map(|n| {
            let u = &fp.trace.iterates[n];
            let w = kernel.assignment(u)?;
            Ok(TraceRecord {
                iteration: n,
                step_sse: fp.trace.step_sse[n - 1],
                sse_to_reference: u
                    .iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
                objective_total: Some(objective(&w, p, beta)?.total),
            })
        })
        .collect()
}

fn sinkhorn_trace(p: &ProbMatrix, epsilon: f64, iters: usize, ref_iters: usize) -> Result<Vec<TraceRecord>> {
    let p = floor_probs(p);
    let reference = run_sinkhorn(&p, epsilon, ref_iters.max(1), 0.0, |_, _| {})?.assignment;
    let mut sse = Vec::with_capacity(iters);
    let sol = run_sinkhorn(&p, epsilon, iters, 0.0, |_, a| {
        sse.push(sq_dist(a, reference.matrix()));
    })?;
    Ok(sse
        .into_iter()
        .zip(sol.step_sse)
        .enumerate()
        .map(|(n, (to_ref, step))| TraceRecord {
            iteration: n + 1,
            step_sse: step,
            sse_to_reference: to_ref,
            objective_total: None,
        })
        .collect())
}

/// First iteration whose `sse_to_reference` is below `threshold`.
pub fn iterations_to(trace: &[TraceRecord], threshold: f64) -> Option<usize> {
    trace
        .iter()
        .find(|r| r.sse_to_reference < threshold)
        .map(|r| r.iteration)
}

/// Per-method statistics of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssignmentStats {
    pub marg_entropy: f64,
    pub mi_estimate: f64,
    pub kl_to_model: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchComparison {
    pub batch: usize,
    pub model: AssignmentStats,
    pub mira: AssignmentStats,
    pub sinkhorn: AssignmentStats,
    /// `max_j |Σ_i a_ij - B/K|` of the Sinkhorn output.
    pub sinkhorn_col_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseReport {
    pub batches: Vec<BatchComparison>,
    pub mean_mira_kl: f64,
    pub mean_sinkhorn_kl: f64,
}

fn stats(w: &ProbMatrix, p: &ProbMatrix) -> Result<AssignmentStats> {
    Ok(AssignmentStats {
        marg_entropy: entropy(marginal(w).as_slice()),
        mi_estimate: mi_estimate(w),
        kl_to_model: kl_term(w, p)?,
    })
}

/// Runs both assignment methods on the same batches.
pub fn compare_collapse(
    batches: &[ProbMatrix],
    mira: &SolverConfig,
    sk: &SinkhornConfig,
) -> Result<CollapseReport> {
    let mut out = Vec::with_capacity(batches.len());
    for (n, p) in batches.iter().enumerate() {
        if let Some(first) = batches.first() {
            if first.cols() != p.cols() {
                return Err(crate::matrix::shape_err(first.matrix(), p.matrix()));
            }
        }
        let w = solver::solve(p, mira)?.assignment;
        let floored = floor_probs(p);
        let a = sinkhorn_solve(&floored, sk)?;
        out.push(BatchComparison {
            batch: n,
            model: stats(p, p)?,
            mira: stats(&w, p)?,
            sinkhorn: stats(&a.assignment, &floored)?,
            sinkhorn_col_deviation: a.max_col_deviation,
        });
    }
    let mean = |f: fn(&BatchComparison) -> f64| {
        if out.is_empty() {
            0.0
        } else {
            out.iter().map(f).sum::<f64>() / out.len() as f64
        }
    };
    Ok(CollapseReport {
        mean_mira_kl: mean(|b| b.mira.kl_to_model),
        mean_sinkhorn_kl: mean(|b| b.sinkhorn.kl_to_model),
        batches: out,
    })
}
