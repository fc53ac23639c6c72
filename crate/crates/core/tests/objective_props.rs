use mira_core::matrix::{random_instance, random_logits, softmax_with_temperature};
use mira_core::objective::{entropy, kl_term, mi_estimate, objective, objective_expanded};
use mira_core::oracle::{objective_gradient, objective_value};
use mira_core::{Matrix, ProbMatrix};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (ProbMatrix, ProbMatrix, f64)> {
    (1usize..10, 2usize..8, any::<u64>(), any::<u64>(), 0.0f64..0.99).prop_map(|(b, k, s1, s2, beta)| {
        (
            random_instance(b, k, 2.0, s1).unwrap(),
            random_instance(b, k, 1.0, s2).unwrap(),
            beta,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_rows_sum_to_one(b in 1usize..20, k in 2usize..50, s in 0.0f64..30.0, seed in any::<u64>(), tau in 0.01f64..10.0) {
        let p = softmax_with_temperature(&random_logits(b, k, s, seed).unwrap(), tau).unwrap();
        for row in p.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance(k in 2usize..20, seed in any::<u64>(), c in -100.0f64..100.0, tau in 0.05f64..5.0) {
        let l = random_logits(1, k, 1.0, seed).unwrap();
        let shifted = mira_core::LogitMatrix::new(l.matrix().map(|x| x + c)).unwrap();
        let a = softmax_with_temperature(&l, tau).unwrap();
        let b = softmax_with_temperature(&shifted, tau).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn two_forms_agree((w, p, beta) in pair()) {
        let b = objective(&w, &p, beta).unwrap();
        let expanded = objective_expanded(&w, &p, beta).unwrap();
        prop_assert!((b.total - expanded).abs() < 1e-10);
        prop_assert!((b.total - (kl_term(&w, &p).unwrap() - beta * mi_estimate(&w))).abs() < 1e-10);
        prop_assert!((b.total - objective_value(&w, &p, beta).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn breakdown_is_permutation_invariant((w, p, beta) in pair()) {
        let a = objective(&w, &p, beta).unwrap();
        let rows: Vec<usize> = (0..w.rows()).rev().collect();
        let cols: Vec<usize> = (1..w.cols()).chain([0]).collect();
        let r = objective(&w.permute_rows(&rows), &p.permute_rows(&rows), beta).unwrap();
        let c = objective(&w.permute_cols(&cols), &p.permute_cols(&cols), beta).unwrap();
        for other in [r, c] {
            prop_assert!((a.kl_term - other.kl_term).abs() < 1e-12);
            prop_assert!((a.cond_entropy - other.cond_entropy).abs() < 1e-12);
            prop_assert!((a.marg_entropy - other.marg_entropy).abs() < 1e-12);
            prop_assert!((a.mi_estimate - other.mi_estimate).abs() < 1e-12);
            prop_assert!((a.total - other.total).abs() < 1e-12);
        }
    }

    #[test]
    fn information_bounds((w, _p, _beta) in pair()) {
        let b = objective(&w, &w, 0.5).unwrap();
        let log_k = (w.cols() as f64).ln();
        prop_assert!(b.marg_entropy <= log_k + 1e-12);
        prop_assert!(b.mi_estimate >= -1e-12);
        prop_assert!(b.mi_estimate <= b.marg_entropy + 1e-12);
        prop_assert!(b.kl_term.abs() < 1e-12);
    }

    #[test]
    fn convexity_witness((w1, p, beta) in pair(), s in any::<u64>()) {
        let w2 = random_instance(p.rows(), p.cols(), 1.5, s).unwrap();
        let f1 = objective(&w1, &p, beta).unwrap().total;
        let f2 = objective(&w2, &p, beta).unwrap().total;
        for t in [0.25, 0.5, 0.75] {
            let mid = w1.mix(&w2, t).unwrap();
            let fm = objective(&mid, &p, beta).unwrap().total;
            prop_assert!(fm <= t * f1 + (1.0 - t) * f2 + 1e-12, "t {t}: {fm} vs {f1}, {f2}");
        }
    }
}

#[test]
fn entropy_of_uniform_is_log_k() {
    for k in [2usize, 10, 3000] {
        let u = vec![1.0 / k as f64; k];
        assert!((entropy(&u) - (k as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn mi_zero_iff_rows_equal() {
    let equal = ProbMatrix::new(Matrix::from_rows(&[[0.2, 0.3, 0.5]; 4]).unwrap()).unwrap();
    assert!(mi_estimate(&equal).abs() < 1e-15);
    let mut rows = [[0.2, 0.3, 0.5]; 4];
    rows[2] = [0.3, 0.2, 0.5];
    let differ = ProbMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
    assert!(mi_estimate(&differ) > 1e-3);
}

/// Central differences of the objective along perturbations that stay on the
/// simplex (entry j up, entry l down) must match `g_ij - g_il`.
#[test]
fn objective_gradient_matches_finite_differences() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let b = 2 + (seed % 4) as usize;
        let k = 2 + (seed % 3) as usize;
        let beta = [0.0, 0.3, 0.5, 2.0 / 3.0][(seed % 4) as usize];
        let p = random_instance(b, k, 1.0, seed).unwrap();
        let w = random_instance(b, k, 1.0, 1000 + seed).unwrap();
        let g = objective_gradient(&w, &p, beta).unwrap();
        for i in 0..b {
            for j in 0..k {
                // full-space derivative via an unnormalized bump of a single entry
                let f = |d: f64| {
                    let mut m = w.matrix().clone();
                    m.set(i, j, m.get(i, j) + d);
                    expanded_unnormalized(&m, &p, beta)
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let an = g.get(i, j);
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

/// The three-term objective evaluated on any positive matrix (rows need not
/// sum to one), written independently of the library.
fn expanded_unnormalized(w: &Matrix, p: &ProbMatrix, beta: f64) -> f64 {
    let b = w.rows() as f64;
    let mut cross = 0.0;
    let mut neg_ent = 0.0;
    let mut col = vec![0.0; w.cols()];
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let x = w.get(i, j);
            cross -= x * p.get(i, j).ln();
            neg_ent += x * x.ln();
            col[j] += x / b;
        }
    }
    let marg: f64 = col.iter().map(|c| c * c.ln()).sum();
    cross / b + (1.0 - beta) * neg_ent / b + beta * marg
}
