//! Dense row-major containers for probability and logit matrices, with
//! validation, temperature softmax and seeded instance generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};

/// Row-sum tolerance used when validating matrices supplied from outside.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Row block size below which reductions fall back to a sequential loop.
const PAIRWISE_BLOCK: usize = 16;

/// A dense `rows x cols` matrix of `f64`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MiraError::InvalidMatrix(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MiraError::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(MiraError::Shape {
                expected_rows: self.cols,
                expected_cols: other.cols,
                rows: other.rows,
                cols: other.cols,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (l, &a_il) in a.iter().enumerate() {
                if a_il == 0.0 {
                    continue;
                }
                for (o_j, &b_lj) in o.iter_mut().zip(other.row(l)) {
                    *o_j += a_il * b_lj;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(MiraError::Shape {
                expected_rows: other.rows,
                expected_cols: self.cols,
                rows: other.rows,
                cols: other.cols,
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.set(i, j, dot(a, other.row(j)));
            }
        }
        Ok(out)
    }

    /// Largest absolute entrywise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Returns a copy with rows reordered so that row `i` of the output is row
    /// `perm[i]` of the input.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rows, "permutation length must equal row count");
        let mut out = Self::zeros(self.rows, self.cols);
        for (i, &src) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(src));
        }
        out
    }

    /// Returns a copy with columns reordered so that column `j` of the output
    /// is column `perm[j]` of the input.
    pub fn permute_cols(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, &src) in perm.iter().enumerate() {
                out.set(i, j, self.get(i, src));
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise (cascade) summation of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Column sums `Σ_i s_i m_ij` with pairwise reduction over rows. `row_scale`
/// defaults to all ones.
pub fn column_sums(m: &Matrix, row_scale: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    column_sums_range(m, row_scale, 0, m.rows, &mut out);
    out
}

fn column_sums_range(m: &Matrix, scale: Option<&[f64]>, lo: usize, hi: usize, out: &mut [f64]) {
    if hi - lo <= PAIRWISE_BLOCK {
        for i in lo..hi {
            let s = scale.map_or(1.0, |s| s[i]);
            for (o, &x) in out.iter_mut().zip(m.row(i)) {
                *o += s * x;
            }
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let mut right = vec![0.0; out.len()];
    column_sums_range(m, scale, lo, mid, out);
    column_sums_range(m, scale, mid, hi, &mut right);
    for (o, r) in out.iter_mut().zip(right) {
        *o += r;
    }
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Overwrites `row` with `softmax(row)` computed by max subtraction.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Outcome of checking a matrix against the row-stochastic invariants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: usize,
    pub cols: usize,
    pub max_row_sum_deviation: f64,
    pub min_entry: f64,
    pub non_finite_entries: usize,
    pub passed: bool,
}

/// Checks every row-stochastic invariant without modifying the input.
pub fn validate_prob_matrix(m: &Matrix) -> ValidationReport {
    let non_finite_entries = m.as_slice().iter().filter(|x| !x.is_finite()).count();
    let min_entry = m
        .as_slice()
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    let max_row_sum_deviation = m
        .row_iter()
        .map(|r| (pairwise_sum(r) - 1.0).abs())
        .fold(0.0, |acc: f64, d| if d.is_nan() { f64::INFINITY } else { acc.max(d) });
    let passed = m.rows() >= 1
        && m.cols() >= 2
        && non_finite_entries == 0
        && min_entry >= 0.0
        && max_row_sum_deviation <= ROW_SUM_TOL;
    ValidationReport {
        rows: m.rows(),
        cols: m.cols(),
        max_row_sum_deviation,
        min_entry,
        non_finite_entries,
        passed,
    }
}

/// A `B x K` matrix whose rows lie on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    /// Validates `m` and wraps it.
    pub fn new(m: Matrix) -> Result<Self> {
        let report = validate_prob_matrix(&m);
        if !report.passed {
            return Err(MiraError::InvalidMatrix(format!(
                "not row-stochastic ({}x{}): max row-sum deviation {:e}, min entry {:e}, {} non-finite",
                report.rows,
                report.cols,
                report.max_row_sum_deviation,
                report.min_entry,
                report.non_finite_entries
            )));
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Wraps a matrix the caller has just normalized.
    pub(crate) fn from_normalized(m: Matrix) -> Self {
        debug_assert!(validate_prob_matrix(&m).passed);
        Self(m)
    }

    /// Every row equal to `1/K`.
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols < 2 {
            return Err(param_err("shape", "need at least 1 row and 2 columns"));
        }
        Ok(Self(Matrix::filled(rows, cols, 1.0 / cols as f64)))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.0.row_iter()
    }

    pub fn max_abs_diff(&self, other: &ProbMatrix) -> Option<f64> {
        self.0.max_abs_diff(&other.0)
    }

    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self(self.0.permute_rows(perm))
    }

    pub fn permute_cols(&self, perm: &[usize]) -> Self {
        Self(self.0.permute_cols(perm))
    }

    /// Entrywise convex combination `t * self + (1 - t) * other`.
    pub fn mix(&self, other: &ProbMatrix, t: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.matrix(), other.matrix()));
        }
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        Self::new(Matrix::new(self.rows(), self.cols(), data)?)
    }
}

pub(crate) fn shape_err(expected: &Matrix, got: &Matrix) -> MiraError {
    MiraError::Shape {
        expected_rows: expected.rows(),
        expected_cols: expected.cols(),
        rows: got.rows(),
        cols: got.cols(),
    }
}

/// Unnormalized scores, one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LogitMatrix(Matrix);

impl LogitMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(MiraError::InvalidMatrix("logits must be finite".into()));
        }
        if m.rows() == 0 || m.cols() < 2 {
            return Err(MiraError::InvalidMatrix(
                "logits need at least 1 row and 2 columns".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }
}

/// A point on the K-simplex: cluster marginals and fixed-point iterates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalVector(Vec<f64>);

impl MarginalVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MiraError::InvalidMatrix(
                "marginal entries must be finite and non-negative".into(),
            ));
        }
        let dev = (pairwise_sum(&values) - 1.0).abs();
        if dev > ROW_SUM_TOL {
            return Err(MiraError::InvalidMatrix(format!(
                "marginal sums to 1 {dev:+e}"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Wraps an iterate without checking that it sums to one.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row-wise `softmax(logits / tau)`.
pub fn softmax_with_temperature(logits: &LogitMatrix, tau: f64) -> Result<ProbMatrix> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(param_err("tau", format!("must be > 0, got {tau}")));
    }
    let mut out = logits.matrix().map(|x| x / tau);
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(ProbMatrix::from_normalized(out))
}

/// Seeded generator shared by every randomized path in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` matrix of i.i.d. standard normals scaled by `scale`.
pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Matrix {
        rows,
        cols,
        data,
    }
}

/// Random logits `sharpness * N(0, 1)`, deterministic for a given seed.
pub fn random_logits(rows: usize, cols: usize, sharpness: f64, seed: u64) -> Result<LogitMatrix> {
    if rows == 0 || cols < 2 {
        return Err(param_err("shape", "need at least 1 row and 2 columns"));
    }
    if !(sharpness >= 0.0 && sharpness.is_finite()) {
        return Err(param_err("sharpness", format!("must be >= 0, got {sharpness}")));
    }
    let mut rng = seeded_rng(seed);
    LogitMatrix::new(gaussian_matrix(rows, cols, sharpness, &mut rng))
}

/// Random row-stochastic instance: softmax of Gaussian logits scaled by
/// `sharpness`. `sharpness = 0` yields exactly uniform rows.
pub fn random_instance(rows: usize, cols: usize, sharpness: f64, seed: u64) -> Result<ProbMatrix> {
    let logits = random_logits(rows, cols, sharpness, seed)?;
    softmax_with_temperature(&logits, 1.0)
}
