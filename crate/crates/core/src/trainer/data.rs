use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::matrix::{seeded_rng, Matrix};

/// Labelled points drawn from isotropic Gaussian blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Rows `idx` of the point matrix.
    pub fn gather(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.dim());
        for (i, &src) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.points.row(src));
        }
        out
    }
}

/// `n` points in `c` blobs whose means sit evenly on the unit circle spanned
/// by the first two coordinates. Point `i` belongs to blob `i % c`.
pub fn generate_blobs(n: usize, c: usize, dim: usize, spread: f64, seed: u64) -> Result<ToyDataset> {
    if c < 2 || n < c {
        return Err(param_err("n, c", format!("need n >= c >= 2, got n = {n}, c = {c}")));
    }
    if dim < 2 {
        return Err(param_err("dim", "need at least 2 dimensions"));
    }
    if !(spread >= 0.0) {
        return Err(param_err("spread", "must be >= 0"));
    }
    let mut rng = seeded_rng(seed);
    let mut points = Matrix::zeros(n, dim);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    for (i, &label) in labels.iter().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * label as f64 / c as f64;
        let row = points.row_mut(i);
        row[0] = angle.cos();
        row[1] = angle.sin();
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += spread * z;
        }
    }
    Ok(ToyDataset {
        points,
        labels,
        num_clusters: c,
    })
}

/// Two views `x + ξ1`, `x + ξ2` with `ξ ~ N(0, noise² I)`.
pub fn augment(x: &[f64], noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let view = |rng: &mut ChaCha8Rng| {
        x.iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                v + noise * z
            })
            .collect::<Vec<_>>()
    };
    let a = view(&mut rng);
    let b = view(&mut rng);
    (a, b)
}

/// Row-wise two-view augmentation of a batch.
pub(crate) fn augment_batch(batch: &Matrix, noise: f64, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let mut views = [batch.clone(), batch.clone()];
    if noise > 0.0 {
        for v in &mut views {
            for x in v.as_mut_slice() {
                let z: f64 = StandardNormal.sample(rng);
                *x += noise * z;
            }
        }
    }
    let [a, b] = views;
    (a, b)
}

pub(crate) fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
