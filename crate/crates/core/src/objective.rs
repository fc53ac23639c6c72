//! Mini-batch entropy and mutual-information estimates, and the assignment
//! objective built from them.
//!
//! All logarithms are natural. `0 * log 0` is taken as `0`, so assignments on
//! the boundary of the simplex are handled.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{column_sums, pairwise_sum, shape_err, MarginalVector, ProbMatrix};

/// Terms of the assignment objective for one `(W, P, beta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `(1/B) Σ_i KL(w_i || p_i)`.
    pub kl_term: f64,
    /// Mean per-row entropy, `Ĥ(Y|B)`.
    pub cond_entropy: f64,
    /// Entropy of the column marginal, `Ĥ(Y)`.
    pub marg_entropy: f64,
    /// `Ĥ(Y) - Ĥ(Y|B)`.
    pub mi_estimate: f64,
    /// `kl_term - beta * mi_estimate`.
    pub total: f64,
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Column means of `w`.
pub fn marginal(w: &ProbMatrix) -> MarginalVector {
    let b = w.rows() as f64;
    let mut m = column_sums(w.matrix(), None);
    for x in &mut m {
        *x /= b;
    }
    MarginalVector::from_raw(m)
}

/// Shannon entropy of a distribution.
pub fn entropy(d: &[f64]) -> f64 {
    let terms: Vec<f64> = d.iter().map(|&x| -xlogx(x)).collect();
    pairwise_sum(&terms).max(0.0)
}

/// Mean row entropy `(1/B) Σ_i H(w_i)`.
pub fn conditional_entropy(w: &ProbMatrix) -> f64 {
    let per_row: Vec<f64> = w.row_iter().map(entropy).collect();
    pairwise_sum(&per_row) / w.rows() as f64
}

/// `Ĥ(marginal(W)) - (1/B) Σ_i H(w_i)`.
pub fn mi_estimate(w: &ProbMatrix) -> f64 {
    entropy(marginal(w).as_slice()) - conditional_entropy(w)
}

fn check_same_shape(w: &ProbMatrix, p: &ProbMatrix) -> Result<()> {
    if w.shape() != p.shape() {
        return Err(shape_err(p.matrix(), w.matrix()));
    }
    Ok(())
}

/// `(1/B) Σ_i Σ_j w_ij log(w_ij / p_ij)`.
pub fn kl_term(w: &ProbMatrix, p: &ProbMatrix) -> Result<f64> {
    check_same_shape(w, p)?;
    let mut per_row = Vec::with_capacity(w.rows());
    let mut terms = vec![0.0; w.cols()];
    for i in 0..w.rows() {
        for (j, (t, (&wij, &pij))) in terms
            .iter_mut()
            .zip(w.row(i).iter().zip(p.row(i)))
            .enumerate()
        {
            *t = if wij > 0.0 {
                if pij <= 0.0 {
                    return Err(MiraError::SupportMismatch { row: i, col: j });
                }
                wij * (wij.ln() - pij.ln())
            } else {
                0.0
            };
        }
        per_row.push(pairwise_sum(&terms));
    }
    Ok((pairwise_sum(&per_row) / w.rows() as f64).max(0.0))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(param_err("beta", format!("must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

/// The objective in its three-term expanded form:
/// `-(1/B)ΣΣ w log p + ((1-β)/B)ΣΣ w log w + β Σ_j w̄_j log w̄_j`.
pub fn objective_expanded(w: &ProbMatrix, p: &ProbMatrix, beta: f64) -> Result<f64> {
    check_same_shape(w, p)?;
    check_beta(beta)?;
    let b = w.rows() as f64;
    let mut cross = Vec::with_capacity(w.rows());
    let mut neg_ent = Vec::with_capacity(w.rows());
    let mut terms = vec![0.0; w.cols()];
    for i in 0..w.rows() {
        for (j, (t, (&wij, &pij))) in terms
            .iter_mut()
            .zip(w.row(i).iter().zip(p.row(i)))
            .enumerate()
        {
            *t = if wij > 0.0 {
                if pij <= 0.0 {
                    return Err(MiraError::SupportMismatch { row: i, col: j });
                }
                -wij * pij.ln()
            } else {
                0.0
            };
        }
        cross.push(pairwise_sum(&terms));
        for (t, &wij) in terms.iter_mut().zip(w.row(i)) {
            *t = xlogx(wij);
        }
        neg_ent.push(pairwise_sum(&terms));
    }
    let marg = marginal(w);
    let marg_terms: Vec<f64> = marg.as_slice().iter().map(|&x| xlogx(x)).collect();
    Ok(pairwise_sum(&cross) / b
        + (1.0 - beta) * pairwise_sum(&neg_ent) / b
        + beta * pairwise_sum(&marg_terms))
}

/// Full objective breakdown; `total = kl_term - beta * mi_estimate`.
pub fn objective(w: &ProbMatrix, p: &ProbMatrix, beta: f64) -> Result<ObjectiveBreakdown> {
    check_beta(beta)?;
    let kl = kl_term(w, p)?;
    let cond_entropy = conditional_entropy(w);
    let marg_entropy = entropy(marginal(w).as_slice());
    let mi = marg_entropy - cond_entropy;
    let total = kl - beta * mi;
    debug_assert!({
        let expanded = objective_expanded(w, p, beta)?;
        (expanded - total).abs() <= 1e-9 * (1.0 + total.abs())
    });
    Ok(ObjectiveBreakdown {
        kl_term: kl,
        cond_entropy,
        marg_entropy,
        mi_estimate: mi,
        total,
    })
}
