//! Desk-scale clustering-based representation learning.
//!
//! Each step draws two noisy views of a batch, assigns pseudo-labels to each
//! view with the fixed-point solver on the EMA network's logits, and takes a
//! gradient step on the swapped prediction loss. `beta` and the EMA momentum
//! follow half-cosine schedules over all training steps.

mod data;
mod metrics;
mod model;
mod schedule;

pub use data::{augment, generate_blobs, ToyDataset};
pub use metrics::{argmax, cluster_accuracy, cluster_accuracy_greedy, EXACT_MATCH_MAX};
pub use model::{forward, loss_gradient, swapped_loss, EncoderGradient, EncoderState, NORM_EPS};
pub use schedule::cosine_schedule;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, MiraError, Result};
use crate::matrix::{seeded_rng, softmax_with_temperature, Matrix, ProbMatrix};
use crate::objective::{entropy, marginal, mi_estimate};
use crate::solver::{solve_from_logits, SolverConfig};

/// Synthetic blob task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobConfig {
    pub points: usize,
    pub clusters: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            points: 4096,
            clusters: 4,
            dim: 2,
            spread: 0.1,
            seed: 0,
        }
    }
}

impl BlobConfig {
    pub fn generate(&self) -> Result<ToyDataset> {
        generate_blobs(self.points, self.clusters, self.dim, self.spread, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Student (prediction) temperature.
    pub tau_s: f64,
    /// Target (pseudo-label) temperature.
    pub tau_t: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub ema_start: f64,
    pub ema_end: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixed-point iterations per pseudo-labeling call.
    pub fp_iters: usize,
    pub augment_noise: f64,
    pub embed_dim: usize,
    pub num_prototypes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau_s: 0.1,
            tau_t: 0.225,
            beta_start: 0.7,
            beta_end: 2.0 / 3.0,
            ema_start: 0.99,
            ema_end: 1.0,
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 64,
            fp_iters: 30,
            augment_noise: 0.05,
            embed_dim: 2,
            num_prototypes: 4,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(param_err(name, format!("must be > 0, got {v}")))
            }
        };
        positive("tau_s", self.tau_s)?;
        positive("tau_t", self.tau_t)?;
        if !(0.0 <= self.beta_end && self.beta_end <= self.beta_start && self.beta_start < 1.0) {
            return Err(param_err("beta_start, beta_end", "need 0 <= beta_end <= beta_start < 1"));
        }
        if !(0.0 < self.ema_start && self.ema_start <= self.ema_end && self.ema_end <= 1.0) {
            return Err(param_err("ema_start, ema_end", "need 0 < ema_start <= ema_end <= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(param_err("learning_rate", "must be >= 0"));
        }
        if !(self.augment_noise >= 0.0) {
            return Err(param_err("augment_noise", "must be >= 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.fp_iters == 0 {
            return Err(param_err("epochs, batch_size, fp_iters", "must be >= 1"));
        }
        if self.embed_dim < 2 || self.num_prototypes < 2 {
            return Err(param_err("embed_dim, num_prototypes", "must be >= 2"));
        }
        Ok(())
    }

    fn solver_config(&self, beta: f64) -> SolverConfig {
        SolverConfig {
            beta,
            tau_t: self.tau_t,
            max_iters: self.fp_iters,
            tol: 0.0,
            seed: self.seed,
        }
    }

    pub fn beta_at(&self, step: usize, total_steps: usize) -> f64 {
        cosine_schedule(self.beta_start, self.beta_end, step, total_steps)
    }

    pub fn ema_at(&self, step: usize, total_steps: usize) -> f64 {
        cosine_schedule(self.ema_start, self.ema_end, step, total_steps)
    }
}

/// Per-epoch training summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean swapped prediction loss over the epoch's batches.
    pub loss: f64,
    /// Mean entropy of the pseudo-label marginal over batches and views.
    pub marg_entropy: f64,
    /// Mean MI estimate of the pseudo-labels over batches and views.
    pub mi: f64,
    /// Accuracy of the online network's argmax on the clean dataset.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRun {
    pub state: EncoderState,
    pub history: Vec<EpochRecord>,
    /// Epoch at which the loss became non-finite; training stopped there.
    pub diverged_at: Option<usize>,
    /// `beta` and EMA momentum used at the last step.
    pub final_beta: f64,
    pub final_momentum: f64,
}

/// Pseudo-labels for one batch from the EMA network.
pub fn pseudo_labels(state: &EncoderState, batch: &Matrix, cfg: &TrainConfig, beta: f64) -> Result<ProbMatrix> {
    let logits = forward(state, batch, true)?;
    Ok(solve_from_logits(&logits, &cfg.solver_config(beta))?.assignment)
}

/// Online-network predictions `softmax(logits / tau_s)`.
pub fn predict(state: &EncoderState, batch: &Matrix, tau_s: f64) -> Result<ProbMatrix> {
    softmax_with_temperature(&forward(state, batch, false)?, tau_s)
}

pub fn evaluate_accuracy(state: &EncoderState, data: &ToyDataset, tau_s: f64) -> Result<f64> {
    let pred = predict(state, &data.points, tau_s)?;
    if pred.cols().max(data.num_clusters) <= EXACT_MATCH_MAX {
        cluster_accuracy(&pred, &data.labels, data.num_clusters)
    } else {
        cluster_accuracy_greedy(&pred, &data.labels, data.num_clusters)
    }
}

/// Trains a fresh encoder on `data`. Deterministic for a fixed `cfg.seed`.
pub fn train(data: &ToyDataset, cfg: &TrainConfig) -> Result<TrainRun> {
    let state = EncoderState::init(data.dim(), cfg.embed_dim, cfg.num_prototypes, cfg.seed)?;
    train_from(state, data, cfg)
}

/// Continues training from an existing state.
pub fn train_from(mut state: EncoderState, data: &ToyDataset, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(param_err("data", "empty dataset"));
    }
    if state.projection.rows() != data.dim() || state.num_prototypes() != cfg.num_prototypes {
        return Err(param_err("state", "shape does not match data and config"));
    }
    // stream 0 initializes weights; this one drives shuffling and views
    let mut rng = seeded_rng(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut step = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut final_beta = cfg.beta_at(0, total_steps);
    let mut final_momentum = cfg.ema_at(0, total_steps);

    for epoch in 1..=cfg.epochs {
        let order = data::shuffled_indices(data.len(), &mut rng);
        let (mut loss_sum, mut ent_sum, mut mi_sum) = (0.0, 0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let batch = data.gather(idx);
            let (x1, x2) = data::augment_batch(&batch, cfg.augment_noise, &mut rng);
            let beta = cfg.beta_at(step, total_steps);
            let momentum = cfg.ema_at(step, total_steps);

            let u1 = pseudo_labels(&state, &x1, cfg, beta)?;
            let u2 = pseudo_labels(&state, &x2, cfg, beta)?;
            let (loss, grad) = match loss_gradient(&state, (&x1, &x2), &u1, &u2, cfg.tau_s) {
                Ok(r) => r,
                Err(MiraError::Diverged { .. }) => {
                    return Ok(TrainRun {
                        state,
                        history,
                        diverged_at: Some(epoch),
                        final_beta,
                        final_momentum,
                    })
                }
                Err(e) => return Err(e),
            };
            state.apply_gradient(&grad, cfg.learning_rate);
            state.update_ema(momentum);

            loss_sum += loss;
            for u in [&u1, &u2] {
                ent_sum += 0.5 * entropy(marginal(u).as_slice());
                mi_sum += 0.5 * mi_estimate(u);
            }
            final_beta = beta;
            final_momentum = momentum;
            step += 1;
        }
        if !state.is_finite() {
            return Ok(TrainRun {
                state,
                history,
                diverged_at: Some(epoch),
                final_beta,
                final_momentum,
            });
        }
        let n = batches_per_epoch as f64;
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / n,
            marg_entropy: ent_sum / n,
            mi: mi_sum / n,
            accuracy: evaluate_accuracy(&state, data, cfg.tau_s)?,
        });
    }

    Ok(TrainRun {
        state,
        history,
        diverged_at: None,
        final_beta,
        final_momentum,
    })
}
