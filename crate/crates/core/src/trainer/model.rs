//! Linear encoder with a normalized prototype head, the swapped prediction
//! loss, and its hand-derived gradient.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{dot, gaussian_matrix, seeded_rng, softmax_with_temperature, LogitMatrix, Matrix, ProbMatrix};

/// Lower bound on row norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// Online parameters plus their exponential moving average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    /// `D x d` projection.
    pub projection: Matrix,
    /// `K x d` prototypes, used through row-wise L2 normalization.
    pub prototypes: Matrix,
    pub ema_projection: Matrix,
    pub ema_prototypes: Matrix,
}

/// Gradient with respect to the online parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGradient {
    pub projection: Matrix,
    pub prototypes: Matrix,
}

impl EncoderState {
    /// Semi-orthogonal projection and Gaussian prototypes; the EMA copies start
    /// equal to the online weights.
    pub fn init(input_dim: usize, embed_dim: usize, num_prototypes: usize, seed: u64) -> Result<Self> {
        if embed_dim < 2 || num_prototypes < 2 || input_dim == 0 {
            return Err(param_err("shape", "need input_dim >= 1, embed_dim >= 2, num_prototypes >= 2"));
        }
        let mut rng = seeded_rng(seed);
        let projection = semi_orthogonal(gaussian_matrix(input_dim, embed_dim, 1.0, &mut rng));
        let prototypes = gaussian_matrix(num_prototypes, embed_dim, 1.0, &mut rng);
        Ok(Self {
            ema_projection: projection.clone(),
            ema_prototypes: prototypes.clone(),
            projection,
            prototypes,
        })
    }

    pub fn num_prototypes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.projection.is_finite()
            && self.prototypes.is_finite()
            && self.ema_projection.is_finite()
            && self.ema_prototypes.is_finite()
    }

    /// `online -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &EncoderGradient, lr: f64) {
        for (w, g) in self.projection.as_mut_slice().iter_mut().zip(grad.projection.as_slice()) {
            *w -= lr * g;
        }
        for (w, g) in self.prototypes.as_mut_slice().iter_mut().zip(grad.prototypes.as_slice()) {
            *w -= lr * g;
        }
    }

    /// `ema <- m * ema + (1 - m) * online`.
    pub fn update_ema(&mut self, momentum: f64) {
        let mix = |ema: &mut Matrix, online: &Matrix| {
            for (e, o) in ema.as_mut_slice().iter_mut().zip(online.as_slice()) {
                *e = momentum * *e + (1.0 - momentum) * o;
            }
        };
        mix(&mut self.ema_projection, &self.projection);
        mix(&mut self.ema_prototypes, &self.prototypes);
    }
}

/// Gram-Schmidt on the columns (tall input) or rows (wide input).
fn semi_orthogonal(m: Matrix) -> Matrix {
    let tall = m.rows() >= m.cols();
    let mut vecs = if tall { m.transpose() } else { m };
    for i in 0..vecs.rows() {
        for j in 0..i {
            let d = dot(vecs.row(i), vecs.row(j));
            let prev = vecs.row(j).to_vec();
            for (a, b) in vecs.row_mut(i).iter_mut().zip(&prev) {
                *a -= d * b;
            }
        }
        let n = dot(vecs.row(i), vecs.row(i)).sqrt();
        // a Gaussian draw is rank-deficient with probability zero
        for a in vecs.row_mut(i) {
            *a /= n;
        }
    }
    if tall {
        vecs.transpose()
    } else {
        vecs
    }
}

fn normalize_rows(m: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d = n.max(NORM_EPS);
        for x in row.iter_mut() {
            *x /= d;
        }
        norms.push(n);
    }
    (out, norms)
}

/// Backward pass of `y = x / max(|x|, ε)`, row by row.
fn normalize_rows_backward(x: &Matrix, norms: &[f64], grad_y: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let n = norms[i];
        let d = n.max(NORM_EPS);
        let gy = grad_y.row(i);
        let xi = x.row(i);
        let proj: f64 = gy.iter().zip(xi).map(|(a, b)| a * b).sum();
        // below ε the map is linear and has no radial term
        let radial = if n >= NORM_EPS { proj / (n * n * n) } else { 0.0 };
        for ((o, &g), &xv) in out.row_mut(i).iter_mut().zip(gy).zip(xi) {
            *o = g / d - radial * xv;
        }
    }
    out
}

struct ForwardCache {
    embed: Matrix,
    embed_norms: Vec<f64>,
    embed_n: Matrix,
    logits: Matrix,
}

fn forward_with(projection: &Matrix, prototypes_n: &Matrix, batch: &Matrix) -> Result<ForwardCache> {
    let embed = batch.matmul(projection)?;
    let (embed_n, embed_norms) = normalize_rows(&embed);
    let logits = embed_n.matmul_transposed(prototypes_n)?;
    Ok(ForwardCache {
        embed,
        embed_norms,
        embed_n,
        logits,
    })
}

/// Cosine-similarity logits `normalize(x W) normalize(C)^T`, in `[-1, 1]`.
pub fn forward(state: &EncoderState, batch: &Matrix, use_ema: bool) -> Result<LogitMatrix> {
    let (proj, protos) = if use_ema {
        (&state.ema_projection, &state.ema_prototypes)
    } else {
        (&state.projection, &state.prototypes)
    };
    let (protos_n, _) = normalize_rows(protos);
    LogitMatrix::new(forward_with(proj, &protos_n, batch)?.logits)
}

/// `-(1/B) Σ u log q`, treating `0 log q` as 0.
fn cross_entropy(u: &ProbMatrix, q: &ProbMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..u.rows() {
        for (&a, &b) in u.row(i).iter().zip(q.row(i)) {
            if a > 0.0 {
                total -= a * b.ln();
            }
        }
    }
    total / u.rows() as f64
}

/// Swapped prediction loss `ℓ(U1, Q2) + ℓ(U2, Q1)` with `ℓ` the mean cross-entropy.
pub fn swapped_loss(u1: &ProbMatrix, u2: &ProbMatrix, q1: &ProbMatrix, q2: &ProbMatrix) -> Result<f64> {
    let shape = u1.shape();
    for m in [u2, q1, q2] {
        if m.shape() != shape {
            return Err(crate::matrix::shape_err(u1.matrix(), m.matrix()));
        }
    }
    Ok(cross_entropy(u1, q2) + cross_entropy(u2, q1))
}

/// Loss value and gradient of the swapped prediction loss with respect to the
/// online parameters. `U1`, `U2` are constants (no gradient flows into the
/// pseudo-labels).
pub fn loss_gradient(
    state: &EncoderState,
    views: (&Matrix, &Matrix),
    u1: &ProbMatrix,
    u2: &ProbMatrix,
    tau_s: f64,
) -> Result<(f64, EncoderGradient)> {
    if !(tau_s > 0.0) {
        return Err(param_err("tau_s", "must be > 0"));
    }
    let (protos_n, proto_norms) = normalize_rows(&state.prototypes);
    let mut grad_protos_n = Matrix::zeros(state.prototypes.rows(), state.prototypes.cols());
    let mut grad_proj = Matrix::zeros(state.projection.rows(), state.projection.cols());
    let mut q = Vec::with_capacity(2);

    // view 1 is scored against U2, view 2 against U1
    for (x, target) in [(views.0, u2), (views.1, u1)] {
        let cache = forward_with(&state.projection, &protos_n, x)?;
        let pred = softmax_with_temperature(&LogitMatrix::new(cache.logits.clone())?, tau_s)?;
        if pred.shape() != target.shape() {
            return Err(crate::matrix::shape_err(target.matrix(), pred.matrix()));
        }
        let b = x.rows() as f64;
        let mut g_logits = Matrix::zeros(pred.rows(), pred.cols());
        for (g, (&qv, &uv)) in g_logits
            .as_mut_slice()
            .iter_mut()
            .zip(pred.matrix().as_slice().iter().zip(target.matrix().as_slice()))
        {
            *g = (qv - uv) / (b * tau_s);
        }
        let g_embed_n = g_logits.matmul(&protos_n)?;
        let g_p = g_logits.transpose().matmul(&cache.embed_n)?;
        for (a, b) in grad_protos_n.as_mut_slice().iter_mut().zip(g_p.as_slice()) {
            *a += b;
        }
        let g_embed = normalize_rows_backward(&cache.embed, &cache.embed_norms, &g_embed_n);
        let g_w = x.transpose().matmul(&g_embed)?;
        for (a, b) in grad_proj.as_mut_slice().iter_mut().zip(g_w.as_slice()) {
            *a += b;
        }
        q.push(pred);
    }

    let loss = swapped_loss(u1, u2, &q[0], &q[1])?;
    if !loss.is_finite() {
        return Err(MiraError::Diverged { epoch: 0 });
    }
    let grad_protos = normalize_rows_backward(&state.prototypes, &proto_norms, &grad_protos_n);
    Ok((
        loss,
        EncoderGradient {
            projection: grad_proj,
            prototypes: grad_protos,
        },
    ))
}
