use mira_core::matrix::{gaussian_matrix, random_instance, seeded_rng, softmax_with_temperature, Matrix};
use mira_core::trainer::{forward, loss_gradient, swapped_loss, EncoderState};

fn loss_at(state: &EncoderState, x1: &Matrix, x2: &Matrix, u1: &mira_core::ProbMatrix, u2: &mira_core::ProbMatrix, tau: f64) -> f64 {
    let q1 = softmax_with_temperature(&forward(state, x1, false).unwrap(), tau).unwrap();
    let q2 = softmax_with_temperature(&forward(state, x2, false).unwrap(), tau).unwrap();
    swapped_loss(u1, u2, &q1, &q2).unwrap()
}

#[test]
fn trainer_gradient_matches_finite_differences() {
    let h = 1e-5;
    for seed in 0..20u64 {
        let state = EncoderState::init(3, 2, 3, seed).unwrap();
        let mut rng = seeded_rng(100 + seed);
        let x1 = gaussian_matrix(4, 3, 1.0, &mut rng);
        let x2 = gaussian_matrix(4, 3, 1.0, &mut rng);
        let u1 = random_instance(4, 3, 1.0, 200 + seed).unwrap();
        let u2 = random_instance(4, 3, 1.0, 300 + seed).unwrap();
        let tau = 0.5;
        let (_, g) = loss_gradient(&state, (&x1, &x2), &u1, &u2, tau).unwrap();
        let mut worst: f64 = 0.0;
        for which in 0..2 {
            let n = if which == 0 { state.projection.as_slice().len() } else { state.prototypes.as_slice().len() };
            for k in 0..n {
                let bump = |d: f64| {
                    let mut s = state.clone();
                    let m = if which == 0 { &mut s.projection } else { &mut s.prototypes };
                    m.as_mut_slice()[k] += d;
                    loss_at(&s, &x1, &x2, &u1, &u2, tau)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if which == 0 { g.projection.as_slice()[k] } else { g.prototypes.as_slice()[k] };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "seed {seed}: relative error {worst:e}");
    }
}

/// Prototypes enter only through their normalized rows, so the loss is
/// invariant to rescaling a row and the gradient is orthogonal to it.
#[test]
fn prototype_gradient_is_tangent() {
    for seed in 0..20u64 {
        let state = EncoderState::init(5, 3, 4, seed).unwrap();
        let mut rng = seeded_rng(500 + seed);
        let x1 = gaussian_matrix(8, 5, 1.0, &mut rng);
        let x2 = gaussian_matrix(8, 5, 1.0, &mut rng);
        let u1 = random_instance(8, 4, 1.0, 600 + seed).unwrap();
        let u2 = random_instance(8, 4, 1.0, 700 + seed).unwrap();
        let (_, g) = loss_gradient(&state, (&x1, &x2), &u1, &u2, 0.1).unwrap();
        for k in 0..4 {
            let c = state.prototypes.row(k);
            let gk = g.prototypes.row(k);
            let radial: f64 = c.iter().zip(gk).map(|(a, b)| a * b).sum();
            let norm = c.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((radial / norm).abs() < 1e-8, "seed {seed} row {k}: {radial:e}");
        }
    }
}

/// Targets come from the EMA network but are treated as constants: the
/// gradient must not change when only the EMA weights move.
#[test]
fn gradient_ignores_ema_weights() {
    let state = EncoderState::init(4, 2, 3, 9).unwrap();
    let mut rng = seeded_rng(9);
    let x1 = gaussian_matrix(6, 4, 1.0, &mut rng);
    let x2 = gaussian_matrix(6, 4, 1.0, &mut rng);
    let u1 = random_instance(6, 3, 1.0, 10).unwrap();
    let u2 = random_instance(6, 3, 1.0, 11).unwrap();
    let (l0, g0) = loss_gradient(&state, (&x1, &x2), &u1, &u2, 0.1).unwrap();
    let mut moved = state.clone();
    moved.ema_projection = gaussian_matrix(4, 2, 5.0, &mut rng);
    moved.ema_prototypes = gaussian_matrix(3, 2, 5.0, &mut rng);
    let (l1, g1) = loss_gradient(&moved, (&x1, &x2), &u1, &u2, 0.1).unwrap();
    assert_eq!(l0, l1);
    assert_eq!(g0, g1);
}
