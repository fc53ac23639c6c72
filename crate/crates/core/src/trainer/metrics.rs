use crate::error::{param_err, MiraError, Result};
use crate::matrix::ProbMatrix;

/// Largest cluster or label count handled by exact matching.
pub const EXACT_MATCH_MAX: usize = 8;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

fn contingency(assignments: &ProbMatrix, labels: &[usize], num_labels: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != assignments.rows() {
        return Err(param_err(
            "labels",
            format!("expected {} labels, got {}", assignments.rows(), labels.len()),
        ));
    }
    let n = assignments.cols().max(num_labels);
    let mut table = vec![vec![0usize; n]; n];
    for (row, &label) in assignments.row_iter().zip(labels) {
        if label >= num_labels {
            return Err(param_err("labels", format!("label {label} >= {num_labels}")));
        }
        table[argmax(row)][label] += 1;
    }
    Ok(table)
}

fn best_matching(table: &[Vec<usize>], row: usize, used: &mut [bool]) -> usize {
    if row == table.len() {
        return 0;
    }
    let mut best = 0;
    for col in 0..table.len() {
        if !used[col] {
            used[col] = true;
            best = best.max(table[row][col] + best_matching(table, row + 1, used));
            used[col] = false;
        }
    }
    best
}

/// Fraction of points whose argmax cluster maps to their label under the best
/// one-to-one cluster/label matching. Exact for up to [`EXACT_MATCH_MAX`]
/// clusters and labels.
pub fn cluster_accuracy(assignments: &ProbMatrix, labels: &[usize], num_labels: usize) -> Result<f64> {
    if assignments.cols().max(num_labels) > EXACT_MATCH_MAX {
        return Err(MiraError::UnsupportedSize(format!(
            "exact matching supports at most {EXACT_MATCH_MAX} clusters and labels; use cluster_accuracy_greedy"
        )));
    }
    let table = contingency(assignments, labels, num_labels)?;
    let mut used = vec![false; table.len()];
    Ok(best_matching(&table, 0, &mut used) as f64 / labels.len() as f64)
}

/// Approximate accuracy: repeatedly pairs the largest remaining
/// cluster/label cell. A lower bound on [`cluster_accuracy`].
pub fn cluster_accuracy_greedy(assignments: &ProbMatrix, labels: &[usize], num_labels: usize) -> Result<f64> {
    let table = contingency(assignments, labels, num_labels)?;
    let n = table.len();
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    let mut total = 0;
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for r in (0..n).filter(|&r| !row_used[r]) {
            for c in (0..n).filter(|&c| !col_used[c]) {
                if best.is_none_or(|b| table[r][c] > b.0) {
                    best = Some((table[r][c], r, c));
                }
            }
        }
        match best {
            Some((count, r, c)) => {
                total += count;
                row_used[r] = true;
                col_used[c] = true;
            }
            None => break,
        }
    }
    Ok(total as f64 / labels.len() as f64)
}
