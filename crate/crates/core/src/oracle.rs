//! Independent solvers for the assignment objective, used to certify the
//! fixed-point solver.
//!
//! Nothing here calls into [`crate::solver`] or [`crate::objective`]: the
//! objective, its gradient and the row normalization are re-derived locally so
//! a bug in one path cannot hide in the other.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{Matrix, ProbMatrix};

/// Settings shared by the oracle solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Multiplicative-update learning rate; `None` means `0.5 * B`.
    pub step_size: Option<f64>,
    pub max_steps: usize,
    /// Stop when every row's gradient spread `max_j g_ij - min_j g_ij` is below this.
    pub grad_tol: f64,
    /// Coarse grid spacing for [`grid_refine_solve`].
    pub grid_resolution: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            max_steps: 200_000,
            grad_tol: 1e-12,
            grid_resolution: 0.1,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(param_err("step_size", format!("must be > 0, got {eta}")));
            }
        }
        if self.max_steps == 0 {
            return Err(param_err("max_steps", "must be >= 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(param_err("grad_tol", "must be > 0"));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return Err(param_err("grid_resolution", "must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(param_err("beta", format!("must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

fn plogp(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Objective value straight from its expanded definition, on a flat row-major
/// buffer. Entries with `w = 0` contribute nothing to the cross term.
fn eval_objective(w: &[f64], p: &[f64], rows: usize, cols: usize, beta: f64) -> f64 {
    let b = rows as f64;
    let mut cross = 0.0;
    let mut self_ent = 0.0;
    let mut col_mass = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let wij = w[i * cols + j];
            if wij > 0.0 {
                cross -= wij * p[i * cols + j].ln();
            }
            self_ent += plogp(wij);
            col_mass[j] += wij;
        }
    }
    let marg: f64 = col_mass.iter().map(|&m| plogp(m / b)).sum();
    cross / b + (1.0 - beta) * self_ent / b + beta * marg
}

/// Gradient on the support of `p`; off-support entries are left at 0.
fn eval_gradient(w: &[f64], p: &[f64], rows: usize, cols: usize, beta: f64) -> Vec<f64> {
    let b = rows as f64;
    let mut col_mass = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            col_mass[j] += w[i * cols + j];
        }
    }
    let log_marg: Vec<f64> = col_mass.iter().map(|&m| (m / b).ln()).collect();
    let mut g = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            if p[idx] > 0.0 {
                g[idx] = (-p[idx].ln()
                    + (1.0 - beta) * (1.0 + w[idx].ln())
                    + beta * (1.0 + log_marg[j]))
                    / b;
            }
        }
    }
    g
}

/// Largest per-row spread of the gradient over the support of `p`.
fn row_spread(g: &[f64], p: &[f64], rows: usize, cols: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..rows {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..cols {
            if p[i * cols + j] > 0.0 {
                lo = lo.min(g[i * cols + j]);
                hi = hi.max(g[i * cols + j]);
            }
        }
        worst = worst.max(hi - lo);
    }
    worst
}

/// Evaluates the assignment objective on its own code path.
pub fn objective_value(w: &ProbMatrix, p: &ProbMatrix, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if w.shape() != p.shape() {
        return Err(crate::matrix::shape_err(p.matrix(), w.matrix()));
    }
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            if w.get(i, j) > 0.0 && p.get(i, j) == 0.0 {
                return Err(MiraError::SupportMismatch { row: i, col: j });
            }
        }
    }
    Ok(eval_objective(
        w.matrix().as_slice(),
        p.matrix().as_slice(),
        w.rows(),
        w.cols(),
        beta,
    ))
}

/// Gradient of the objective with respect to `w_ij`, before the row
/// constraints are eliminated:
/// `g_ij = (1/B)[-log p_ij + (1-β)(1 + log w_ij) + β(1 + log w̄_j)]`.
pub fn objective_gradient(w: &ProbMatrix, p: &ProbMatrix, beta: f64) -> Result<Matrix> {
    check_beta(beta)?;
    if w.shape() != p.shape() {
        return Err(crate::matrix::shape_err(p.matrix(), w.matrix()));
    }
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            if !(w.get(i, j) > 0.0 && p.get(i, j) > 0.0) {
                return Err(MiraError::Domain { row: i, col: j });
            }
        }
    }
    let g = eval_gradient(
        w.matrix().as_slice(),
        p.matrix().as_slice(),
        w.rows(),
        w.cols(),
        beta,
    );
    Matrix::new(w.rows(), w.cols(), g)
}

/// Result of an oracle run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSolution {
    pub assignment: ProbMatrix,
    pub objective: f64,
    pub steps: usize,
    /// False when the step budget ran out before the stopping test passed.
    pub converged: bool,
    /// Final largest per-row gradient spread (exp-gradient only).
    pub gradient_spread: f64,
}

/// Divides each row of a flat buffer by its sum.
fn renormalize_rows(w: &mut [f64], cols: usize) {
    for row in w.chunks_exact_mut(cols) {
        let s: f64 = row.iter().sum();
        for x in row {
            *x /= s;
        }
    }
}

/// Exponentiated-gradient descent on the product of simplices:
/// `w_ij <- w_ij exp(-η g_ij)`, then row renormalization. A step that raises
/// the objective by more than a few ulps is rejected and `η` halved.
///
/// Starts from the uniform assignment restricted to the support of `P`.
pub fn exp_gradient_solve(p: &ProbMatrix, beta: f64, cfg: &OracleConfig) -> Result<OracleSolution> {
    check_beta(beta)?;
    cfg.validate()?;
    let (rows, cols) = p.shape();
    let pv = p.matrix().as_slice();
    let mut eta = cfg.step_size.unwrap_or(0.5 * rows as f64);

    let mut w: Vec<f64> = pv.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    renormalize_rows(&mut w, cols);
    let mut f = eval_objective(&w, pv, rows, cols, beta);
    let mut g = eval_gradient(&w, pv, rows, cols, beta);
    let mut spread = row_spread(&g, pv, rows, cols);
    let mut steps = 0;
    let mut candidate = vec![0.0; w.len()];

    while spread >= cfg.grad_tol && steps < cfg.max_steps {
        steps += 1;
        for i in 0..rows {
            let r = i * cols..(i + 1) * cols;
            let shift = r
                .clone()
                .filter(|&idx| pv[idx] > 0.0)
                .map(|idx| -eta * g[idx])
                .fold(f64::NEG_INFINITY, f64::max);
            for idx in r {
                candidate[idx] = if pv[idx] > 0.0 {
                    w[idx] * (-eta * g[idx] - shift).exp()
                } else {
                    0.0
                };
            }
        }
        renormalize_rows(&mut candidate, cols);
        let f_new = eval_objective(&candidate, pv, rows, cols, beta);
        let slack = 8.0 * f64::EPSILON * f.abs().max(1.0);
        if f_new <= f + slack && candidate.iter().zip(pv).all(|(&c, &q)| q == 0.0 || c > 0.0) {
            std::mem::swap(&mut w, &mut candidate);
            f = f_new;
            g = eval_gradient(&w, pv, rows, cols, beta);
            spread = row_spread(&g, pv, rows, cols);
        } else {
            eta *= 0.5;
            if eta < f64::MIN_POSITIVE {
                break;
            }
        }
    }

    Ok(OracleSolution {
        assignment: ProbMatrix::new(Matrix::new(rows, cols, w)?)?,
        objective: f,
        steps,
        converged: spread < cfg.grad_tol,
        gradient_spread: spread,
    })
}

/// Largest batch the grid oracle accepts.
pub const GRID_MAX_ROWS: usize = 6;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints can win when the minimum sits on the boundary
    [lo, mid, hi]
        .into_iter()
        .map(|x| (f(x), x))
        .fold((f64::INFINITY, mid), |best, c| if c.0 < best.0 { c } else { best })
        .1
}

/// Exhaustive solver for two clusters and at most [`GRID_MAX_ROWS`] rows.
///
/// Each row is the scalar `x_i = w_i1`. The objective is evaluated on a full
/// grid with spacing `grid_resolution`, then refined one coordinate at a time
/// with golden-section search until a sweep moves no coordinate.
pub fn grid_refine_solve(p: &ProbMatrix, beta: f64, cfg: &OracleConfig) -> Result<OracleSolution> {
    check_beta(beta)?;
    cfg.validate()?;
    let (rows, cols) = p.shape();
    if cols != 2 {
        return Err(MiraError::UnsupportedSize(format!(
            "grid oracle needs exactly 2 columns, got {cols}"
        )));
    }
    if rows > GRID_MAX_ROWS {
        return Err(MiraError::UnsupportedSize(format!(
            "grid oracle supports at most {GRID_MAX_ROWS} rows, got {rows}"
        )));
    }
    let pv = p.matrix().as_slice();

    // rows with a zero entry are pinned to that vertex
    let pinned: Vec<Option<f64>> = (0..rows)
        .map(|i| match (pv[2 * i] > 0.0, pv[2 * i + 1] > 0.0) {
            (true, false) => Some(1.0),
            (false, true) => Some(0.0),
            _ => None,
        })
        .collect();

    let mut buf = vec![0.0; 2 * rows];
    let mut f_at = |x: &[f64]| {
        for (i, &xi) in x.iter().enumerate() {
            buf[2 * i] = xi;
            buf[2 * i + 1] = 1.0 - xi;
        }
        eval_objective(&buf, pv, rows, 2, beta)
    };

    let n = (1.0 / cfg.grid_resolution).round() as usize;
    let levels: Vec<f64> = (0..=n).map(|l| l as f64 / n as f64).collect();
    let mut idx = vec![0usize; rows];
    let mut x = vec![0.0; rows];
    let mut best_x = vec![0.0; rows];
    let mut best_f = f64::INFINITY;
    loop {
        for i in 0..rows {
            x[i] = pinned[i].unwrap_or(levels[idx[i]]);
        }
        let fx = f_at(&x);
        if fx < best_f {
            best_f = fx;
            best_x.copy_from_slice(&x);
        }
        // odometer over free coordinates
        let mut carry = true;
        for i in 0..rows {
            if !carry {
                break;
            }
            if pinned[i].is_some() {
                continue;
            }
            idx[i] += 1;
            if idx[i] > n {
                idx[i] = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }

    // Golden-section only resolves a flat minimum to ~sqrt(eps), so sweeps stop
    // once they no longer lower the objective rather than on coordinate motion.
    let mut x = best_x;
    let mut fx = best_f;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_steps {
        sweeps += 1;
        let before = fx;
        for i in 0..rows {
            if pinned[i].is_some() {
                continue;
            }
            let mut trial = x.clone();
            let xi = golden_section(0.0, 1.0, 1e-12, |t| {
                trial[i] = t;
                f_at(&trial)
            });
            trial[i] = xi;
            let f_new = f_at(&trial);
            if f_new < fx {
                fx = f_new;
                x[i] = xi;
            }
        }
        if before - fx <= 1e-15 * before.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let mut data = Vec::with_capacity(2 * rows);
    for &xi in &x {
        data.push(xi);
        data.push(1.0 - xi);
    }
    let objective = f_at(&x);
    Ok(OracleSolution {
        assignment: ProbMatrix::new(Matrix::new(rows, 2, data)?)?,
        objective,
        steps: sweeps,
        converged,
        gradient_spread: f64::NAN,
    })
}
