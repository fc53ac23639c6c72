//! Fixed-point solver for the MI-regularized assignment problem.
//!
//! The optimal assignment is determined by its column marginal `w̄`:
//!
//! ```text
//! w_ij ∝ w̄_j^(-β/(1-β)) p_ij^(1/(1-β))
//! ```
//!
//! and the marginal is the fixed point of
//!
//! ```text
//! u_j <- [ (1/B) Σ_i p_ij^(1/(1-β)) / Σ_k u_k^(-β/(1-β)) p_ik^(1/(1-β)) ]^(1-β)
//! ```
//!
//! The iteration works on the row-normalized kernel `k = p^(1/(1-β)) / Σ p^(1/(1-β))`;
//! per-row scaling cancels in the update, so `k` can be formed straight from
//! logits as `softmax(logits / (tau (1-β)))`.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{
    column_sums, dot, softmax_in_place, softmax_with_temperature, LogitMatrix, MarginalVector,
    Matrix, ProbMatrix,
};
use crate::objective::{marginal, objective, ObjectiveBreakdown};

/// Entrywise tolerance between the two logit paths of [`solve_from_logits`].
pub const LOGIT_PATH_TOL: f64 = 1e-10;

/// Solver settings. Defaults: `beta = 2/3`, `tau_t = 0.225`, 30 iterations,
/// early exit disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: f64,
    pub tau_t: f64,
    pub max_iters: usize,
    /// Stop once the squared step norm drops below this; `0` disables.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 2.0 / 3.0,
            tau_t: 0.225,
            max_iters: 30,
            tol: 0.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.tau_t > 0.0 && self.tau_t.is_finite()) {
            return Err(param_err("tau_t", format!("must be > 0, got {}", self.tau_t)));
        }
        if self.max_iters == 0 {
            return Err(param_err("max_iters", "must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(param_err("tol", format!("must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(param_err("beta", format!("must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

/// Row-normalized `p^(1/(1-β))` together with the set of columns that carry mass.
#[derive(Clone, Debug)]
pub struct PowerKernel {
    k: Matrix,
    active: Vec<bool>,
    beta: f64,
}

impl PowerKernel {
    pub fn from_probs(p: &ProbMatrix, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let exponent = 1.0 / (1.0 - beta);
        let mut k = p.matrix().map(|x| if x > 0.0 { exponent * x.ln() } else { f64::NEG_INFINITY });
        for i in 0..k.rows() {
            softmax_in_place(k.row_mut(i));
        }
        Ok(Self::from_kernel(k, beta))
    }

    /// Fused path: `softmax(logits / tau / (1 - β))`.
    pub fn from_logits(logits: &LogitMatrix, tau: f64, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let k = softmax_with_temperature(logits, tau * (1.0 - beta))?.into_matrix();
        Ok(Self::from_kernel(k, beta))
    }

    fn from_kernel(k: Matrix, beta: f64) -> Self {
        let active = column_sums(&k, None).iter().map(|&s| s > 0.0).collect();
        Self { k, active, beta }
    }

    pub fn rows(&self) -> usize {
        self.k.rows()
    }

    pub fn cols(&self) -> usize {
        self.k.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Columns of `P` that are not identically zero.
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Initial iterate `u0_j = [(1/B) Σ_i k_ij]^(1-β)`.
    pub fn initial_iterate(&self) -> Vec<f64> {
        let b = self.rows() as f64;
        column_sums(&self.k, None)
            .into_iter()
            .map(|s| if s > 0.0 { ((s / b).ln() * (1.0 - self.beta)).exp() } else { 0.0 })
            .collect()
    }

    /// Per-column log weights `-β/(1-β) log u_j`, shifted so the largest is 0.
    /// Inactive columns get weight 0. Errors if an active column has `u_j = 0`.
    fn column_weights(&self, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        let gamma = self.beta / (1.0 - self.beta);
        let mut logv = Vec::with_capacity(u.len());
        for (j, (&uj, &on)) in u.iter().zip(&self.active).enumerate() {
            if !on {
                logv.push(f64::NEG_INFINITY);
            } else if uj > 0.0 {
                logv.push(-gamma * uj.ln());
            } else {
                return Err(MiraError::DegenerateMarginal { col: j });
            }
        }
        let shift = logv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = logv.iter().map(|&l| (l - shift).exp()).collect();
        Ok((v, shift))
    }

    /// One fixed-point update `u -> F(u)`.
    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.cols() {
            return Err(param_err("u", format!("expected {} entries, got {}", self.cols(), u.len())));
        }
        let (v, shift) = self.column_weights(u)?;
        let inv_denom: Vec<f64> = self.k.row_iter().map(|r| 1.0 / dot(&v, r)).collect();
        let sums = column_sums(&self.k, Some(&inv_denom));
        let b = self.rows() as f64;
        Ok(sums
            .into_iter()
            .zip(&self.active)
            .map(|(s, &on)| {
                if on && s > 0.0 {
                    ((1.0 - self.beta) * ((s / b).ln() - shift)).exp()
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Assignment implied by a marginal: `w_ij ∝ w̄_j^(-β/(1-β)) k_ij`.
    pub fn assignment(&self, marginal: &[f64]) -> Result<ProbMatrix> {
        if marginal.len() != self.cols() {
            return Err(param_err(
                "marginal",
                format!("expected {} entries, got {}", self.cols(), marginal.len()),
            ));
        }
        let (v, _) = self.column_weights(marginal)?;
        let mut w = self.k.clone();
        for i in 0..w.rows() {
            let row = w.row_mut(i);
            for (x, &vj) in row.iter_mut().zip(&v) {
                *x *= vj;
            }
            let total: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Ok(ProbMatrix::from_normalized(w))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Iterates of a fixed-point run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointTrace {
    /// `u^(0), u^(1), ..., u^(N)`.
    pub iterates: Vec<Vec<f64>>,
    /// `step_sse[n - 1] = ||u^(n) - u^(n-1)||²` for `n = 1..=N`.
    pub step_sse: Vec<f64>,
}

/// Output of [`fixed_point_solve`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointSolution {
    /// Final iterate `u^(N)`.
    pub marginal: MarginalVector,
    pub iterations: usize,
    pub final_step_sse: f64,
    pub trace: FixedPointTrace,
}

/// Runs the marginal fixed-point iteration from the default start.
pub fn fixed_point_solve(p: &ProbMatrix, cfg: &SolverConfig) -> Result<FixedPointSolution> {
    cfg.validate()?;
    let kernel = PowerKernel::from_probs(p, cfg.beta)?;
    let u0 = kernel.initial_iterate();
    iterate_kernel(&kernel, u0, cfg)
}

/// Runs the iteration from a caller-supplied start. Entries of `init` on
/// columns of `P` that carry mass must be strictly positive.
pub fn fixed_point_solve_from(
    p: &ProbMatrix,
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<FixedPointSolution> {
    cfg.validate()?;
    let kernel = PowerKernel::from_probs(p, cfg.beta)?;
    let u0 = init
        .iter()
        .zip(kernel.active())
        .map(|(&x, &on)| if on { x } else { 0.0 })
        .collect();
    iterate_kernel(&kernel, u0, cfg)
}

pub(crate) fn iterate_kernel(
    kernel: &PowerKernel,
    u0: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<FixedPointSolution> {
    let mut iterates = Vec::with_capacity(cfg.max_iters + 1);
    let mut step_sse = Vec::with_capacity(cfg.max_iters);
    let mut u = u0;
    iterates.push(u.clone());
    for _ in 0..cfg.max_iters {
        let next = kernel.step(&u)?;
        let sse = sq_dist(&next, &u);
        u = next;
        iterates.push(u.clone());
        step_sse.push(sse);
        if sse < cfg.tol {
            break;
        }
    }
    Ok(FixedPointSolution {
        marginal: MarginalVector::from_raw(u),
        iterations: step_sse.len(),
        final_step_sse: step_sse.last().copied().unwrap_or(0.0),
        trace: FixedPointTrace { iterates, step_sse },
    })
}

/// Full assignment from a marginal.
pub fn recover_assignment(p: &ProbMatrix, marginal: &MarginalVector, beta: f64) -> Result<ProbMatrix> {
    check_beta(beta)?;
    if beta == 0.0 {
        return Ok(p.clone());
    }
    PowerKernel::from_probs(p, beta)?.assignment(marginal.as_slice())
}

/// `max_ij |w_ij - rhs_ij|` where `rhs` is the optimality condition evaluated at
/// `W`'s own marginal. Infinite when `W` puts zero marginal mass on a column
/// where `P` has mass.
pub fn kkt_residual(w: &ProbMatrix, p: &ProbMatrix, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if w.shape() != p.shape() {
        return Err(crate::matrix::shape_err(p.matrix(), w.matrix()));
    }
    let rhs = match recover_assignment(p, &marginal(w), beta) {
        Ok(r) => r,
        Err(MiraError::DegenerateMarginal { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(w.max_abs_diff(&rhs).unwrap_or(f64::INFINITY))
}

/// Solver output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentResult {
    pub assignment: ProbMatrix,
    /// Column means of `assignment`.
    pub marginal: MarginalVector,
    pub iterations_run: usize,
    pub final_step_sse: f64,
    pub kkt_residual: f64,
    pub breakdown: ObjectiveBreakdown,
}

fn finish(p: &ProbMatrix, w: ProbMatrix, iterations: usize, final_step_sse: f64, beta: f64) -> Result<AssignmentResult> {
    let kkt = kkt_residual(&w, p, beta)?;
    let breakdown = objective(&w, p, beta)?;
    Ok(AssignmentResult {
        marginal: marginal(&w),
        assignment: w,
        iterations_run: iterations,
        final_step_sse,
        kkt_residual: kkt,
        breakdown,
    })
}

/// Solves for the pseudo-label assignment of one batch of model probabilities.
pub fn solve(p: &ProbMatrix, cfg: &SolverConfig) -> Result<AssignmentResult> {
    cfg.validate()?;
    if cfg.beta == 0.0 {
        return finish(p, p.clone(), 0, 0.0, 0.0);
    }
    let kernel = PowerKernel::from_probs(p, cfg.beta)?;
    solve_kernel(p, &kernel, cfg)
}

fn solve_kernel(p: &ProbMatrix, kernel: &PowerKernel, cfg: &SolverConfig) -> Result<AssignmentResult> {
    let fp = iterate_kernel(kernel, kernel.initial_iterate(), cfg)?;
    let w = kernel.assignment(fp.marginal.as_slice())?;
    finish(p, w, fp.iterations, fp.final_step_sse, cfg.beta)
}

/// Same as [`solve_from_logits`] but only along the fused kernel path.
pub fn solve_from_logits_fused(logits: &LogitMatrix, cfg: &SolverConfig) -> Result<AssignmentResult> {
    cfg.validate()?;
    let p = softmax_with_temperature(logits, cfg.tau_t)?;
    if cfg.beta == 0.0 {
        return finish(&p, p.clone(), 0, 0.0, 0.0);
    }
    let kernel = PowerKernel::from_logits(logits, cfg.tau_t, cfg.beta)?;
    solve_kernel(&p, &kernel, cfg)
}

/// Pseudo-labels from logits: `softmax(logits / tau_t)` followed by [`solve`].
///
/// The kernel is also formed directly as `softmax(logits / tau_t / (1 - β))`
/// and the two routes must agree entrywise within [`LOGIT_PATH_TOL`].
pub fn solve_from_logits(logits: &LogitMatrix, cfg: &SolverConfig) -> Result<AssignmentResult> {
    cfg.validate()?;
    let p = softmax_with_temperature(logits, cfg.tau_t)?;
    let direct = solve(&p, cfg)?;
    let fused = solve_from_logits_fused(logits, cfg)?;
    let dev = direct
        .assignment
        .max_abs_diff(&fused.assignment)
        .unwrap_or(f64::INFINITY);
    if !(dev <= LOGIT_PATH_TOL) {
        return Err(MiraError::PathDisagreement(dev));
    }
    Ok(direct)
}
