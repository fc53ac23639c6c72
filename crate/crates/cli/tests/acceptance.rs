//! End-to-end acceptance checks. Runs without the libtest harness so the
//! PASS/FAIL line for each criterion is always printed; exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mira_core::matrix::{gaussian_matrix, random_instance, random_logits, seeded_rng, softmax_with_temperature};
use mira_core::objective::{kl_term, mi_estimate, objective, objective_expanded};
use mira_core::oracle::{exp_gradient_solve, grid_refine_solve, objective_gradient, OracleConfig};
use mira_core::sinkhorn::{convergence_trace, floor_probs, sinkhorn_solve, SinkhornConfig, TraceMethod};
use mira_core::solver::{solve, solve_from_logits};
use mira_core::trainer::{forward, loss_gradient, swapped_loss, train, BlobConfig, EncoderState, TrainConfig};
use mira_core::{Matrix, ProbMatrix, SolverConfig};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solver(beta: f64, iters: usize) -> SolverConfig {
    SolverConfig {
        beta,
        max_iters: iters,
        ..SolverConfig::default()
    }
}

fn oracle_agreement() -> Check {
    let start = Instant::now();
    let betas = [0.0, 0.3, 0.5, 2.0 / 3.0];
    let cfg = OracleConfig::default();
    let (mut obj_gap, mut dev): (f64, f64) = (0.0, 0.0);
    for n in 0..50u64 {
        let b = 2 + (n % 5) as usize;
        let beta = betas[(n % 4) as usize];
        let p = random_instance(b, 2, 1.0, 1000 + n).map_err(|e| e.to_string())?;
        let fp = solve(&p, &solver(beta, 1000)).map_err(|e| e.to_string())?;
        let eg = exp_gradient_solve(&p, beta, &cfg).map_err(|e| e.to_string())?;
        let grid = grid_refine_solve(&p, beta, &cfg).map_err(|e| e.to_string())?;
        for o in [&eg, &grid] {
            obj_gap = obj_gap.max((o.objective - fp.breakdown.total).abs());
            dev = dev.max(o.assignment.max_abs_diff(&fp.assignment).ok_or("shape mismatch")?);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(obj_gap <= 1e-6, || format!("objective gap {obj_gap:e}"))?;
    ensure(dev <= 1e-3, || format!("assignment deviation {dev:e}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("50 instances, objective gap {obj_gap:.1e}, deviation {dev:.1e}, {secs:.1}s"))
}

fn kkt_at_scale() -> Check {
    let sizes = [
        (8, 4), (16, 10), (32, 32), (64, 100), (128, 256),
        (256, 512), (512, 256), (512, 1000), (512, 2000), (512, 3000),
    ];
    let (mut worst, mut slowest): (f64, Duration) = (0.0, Duration::ZERO);
    for (n, &(b, k)) in sizes.iter().cycle().take(20).enumerate() {
        let sharpness = if n < 10 { 0.5 } else { 1.0 };
        let logits = random_logits(b, k, sharpness, 2000 + n as u64).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let r = solve_from_logits(&logits, &SolverConfig::default()).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        worst = worst.max(r.kkt_residual);
    }
    ensure(worst < 1e-6, || format!("kkt residual {worst:e}"))?;
    ensure(slowest < Duration::from_secs(5), || format!("slowest solve {slowest:?}"))?;
    Ok(format!("20 instances up to 512x3000, max kkt {worst:.1e}, slowest {:.2}s", slowest.as_secs_f64()))
}

fn beta_zero_identity() -> Check {
    let mut worst: f64 = 0.0;
    for n in 0..100u64 {
        let p = random_instance(1 + (n % 64) as usize, 2 + (n % 40) as usize, 2.0, 3000 + n).map_err(|e| e.to_string())?;
        let r = solve(&p, &solver(0.0, 30)).map_err(|e| e.to_string())?;
        worst = worst.max(r.assignment.max_abs_diff(&p).ok_or("shape mismatch")?);
    }
    ensure(worst < 1e-12, || format!("deviation {worst:e}"))?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

/// Step errors at or below this are treated as exact convergence: once the
/// iterate stops moving in the last bits, successive ratios are noise.
const SSE_FLOOR: f64 = 1e-28;

fn fixed_point_rate() -> Check {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_sse30: f64 = 0.0;
    for &b in &[8usize, 64, 512] {
        for &k in &[4usize, 32, 256] {
            for &beta in &[0.3, 0.5, 2.0 / 3.0] {
                let p = random_instance(b, k, 1.0, (b * 1000 + k) as u64).map_err(|e| e.to_string())?;
                let trace = convergence_trace(TraceMethod::Mira { beta }, &p, 30, 1000).map_err(|e| e.to_string())?;
                for w in trace.windows(2) {
                    if w[0].step_sse > SSE_FLOOR && w[1].step_sse > SSE_FLOOR {
                        worst_ratio = worst_ratio.max(w[1].step_sse / w[0].step_sse);
                    }
                }
                let pts: Vec<(f64, f64)> = trace
                    .iter()
                    .filter(|r| r.step_sse > SSE_FLOOR)
                    .map(|r| (r.iteration as f64, r.step_sse.log10()))
                    .collect();
                if pts.len() >= 2 {
                    worst_slope = worst_slope.max(slope(&pts));
                }
                if b == 512 {
                    worst_sse30 = worst_sse30.max(trace[29].step_sse);
                }
            }
        }
    }
    ensure(worst_slope < 0.0, || format!("log-SSE slope {worst_slope}"))?;
    ensure(worst_ratio < 1.0, || format!("step ratio {worst_ratio}"))?;
    ensure(worst_sse30 < 1e-10, || format!("SSE at iteration 30 {worst_sse30:e}"))?;
    Ok(format!(
        "27 configs, max slope {worst_slope:.2}, max ratio {worst_ratio:.3}, B=512 SSE@30 {worst_sse30:.1e}"
    ))
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn mi_dominance() -> Check {
    let mut min_gain = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    for n in 0..200u64 {
        let beta = [0.3, 0.5, 2.0 / 3.0, 0.9][(n % 4) as usize];
        let p = random_instance(2 + (n % 100) as usize, 2 + (n % 30) as usize, 1.0, 4000 + n).map_err(|e| e.to_string())?;
        let r = solve(&p, &solver(beta, 1000)).map_err(|e| e.to_string())?;
        min_gain = min_gain.min(mi_estimate(&r.assignment) - mi_estimate(&p));
        let at_p = objective(&p, &p, beta).map_err(|e| e.to_string())?.total;
        max_excess = max_excess.max(r.breakdown.total - at_p);
    }
    ensure(min_gain >= 0.0, || format!("MI decreased by {:e}", -min_gain))?;
    ensure(max_excess <= 0.0, || format!("objective above P by {max_excess:e}"))?;
    Ok(format!("200 instances, min MI gain {min_gain:.1e}, max f(W*)-f(P) {max_excess:.1e}"))
}

fn sinkhorn_marginals() -> Check {
    let mut worst: f64 = 0.0;
    let cfg = SinkhornConfig {
        epsilon: 0.5,
        max_iters: 1000,
        ref_iters: 1000,
        tol: 0.0,
    };
    for n in 0..50u64 {
        let (b, k) = (4 + (n % 60) as usize, 2 + (n % 20) as usize);
        let p = floor_probs(&random_instance(b, k, 1.0, 5000 + n).map_err(|e| e.to_string())?);
        let sol = sinkhorn_solve(&p, &cfg).map_err(|e| e.to_string())?;
        for row in sol.assignment.row_iter() {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        worst = worst.max(sol.max_col_deviation);
    }
    ensure(worst < 1e-6, || format!("marginal deviation {worst:e}"))?;
    Ok(format!("50 instances, max marginal deviation {worst:.1e}"))
}

fn objective_identity() -> Check {
    let mut worst: f64 = 0.0;
    for n in 0..1000u64 {
        let (b, k) = (1 + (n % 20) as usize, 2 + (n % 15) as usize);
        let beta = (n % 100) as f64 / 100.0;
        let w = random_instance(b, k, 2.0, 6000 + n).map_err(|e| e.to_string())?;
        let p = random_instance(b, k, 1.0, 7000 + n).map_err(|e| e.to_string())?;
        let total = objective(&w, &p, beta).map_err(|e| e.to_string())?.total;
        let split = kl_term(&w, &p).map_err(|e| e.to_string())? - beta * mi_estimate(&w);
        let expanded = objective_expanded(&w, &p, beta).map_err(|e| e.to_string())?;
        worst = worst.max((total - split).abs()).max((total - expanded).abs());
    }
    ensure(worst < 1e-10, || format!("identity error {worst:e}"))?;
    Ok(format!("1000 triples, max error {worst:.1e}"))
}

fn gradients() -> Check {
    let mut obj_err: f64 = 0.0;
    let h = 1e-6;
    for n in 0..20u64 {
        let (b, k) = (2 + (n % 4) as usize, 2 + (n % 3) as usize);
        let beta = [0.0, 0.3, 0.5, 2.0 / 3.0][(n % 4) as usize];
        let p = random_instance(b, k, 1.0, 8000 + n).map_err(|e| e.to_string())?;
        let w = random_instance(b, k, 1.0, 8100 + n).map_err(|e| e.to_string())?;
        let g = objective_gradient(&w, &p, beta).map_err(|e| e.to_string())?;
        for i in 0..b {
            for j in 0..k {
                let f = |d: f64| {
                    let mut m = w.matrix().clone();
                    m.set(i, j, m.get(i, j) + d);
                    free_objective(&m, &p, beta)
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let an = g.get(i, j);
                obj_err = obj_err.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
            }
        }
    }

    let (mut net_err, mut tangency): (f64, f64) = (0.0, 0.0);
    let h = 1e-5;
    for n in 0..20u64 {
        let state = EncoderState::init(3, 2, 3, n).map_err(|e| e.to_string())?;
        let mut rng = seeded_rng(8200 + n);
        let x1 = gaussian_matrix(4, 3, 1.0, &mut rng);
        let x2 = gaussian_matrix(4, 3, 1.0, &mut rng);
        let u1 = random_instance(4, 3, 1.0, 8300 + n).map_err(|e| e.to_string())?;
        let u2 = random_instance(4, 3, 1.0, 8400 + n).map_err(|e| e.to_string())?;
        let tau = 0.5;
        let (_, g) = loss_gradient(&state, (&x1, &x2), &u1, &u2, tau).map_err(|e| e.to_string())?;
        let loss = |s: &EncoderState| {
            let q1 = softmax_with_temperature(&forward(s, &x1, false).unwrap(), tau).unwrap();
            let q2 = softmax_with_temperature(&forward(s, &x2, false).unwrap(), tau).unwrap();
            swapped_loss(&u1, &u2, &q1, &q2).unwrap()
        };
        for (which, grad) in [(0, &g.projection), (1, &g.prototypes)] {
            for idx in 0..grad.as_slice().len() {
                let bump = |d: f64| {
                    let mut s = state.clone();
                    let m = if which == 0 { &mut s.projection } else { &mut s.prototypes };
                    m.as_mut_slice()[idx] += d;
                    loss(&s)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = grad.as_slice()[idx];
                net_err = net_err.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            }
        }
        for r in 0..3 {
            let c = state.prototypes.row(r);
            let radial: f64 = c.iter().zip(g.prototypes.row(r)).map(|(a, b)| a * b).sum();
            tangency = tangency.max((radial / c.iter().map(|a| a * a).sum::<f64>().sqrt()).abs());
        }
    }
    ensure(obj_err < 1e-4, || format!("objective gradient error {obj_err:e}"))?;
    ensure(net_err < 1e-4, || format!("trainer gradient error {net_err:e}"))?;
    ensure(tangency < 1e-8, || format!("prototype radial component {tangency:e}"))?;
    Ok(format!(
        "20+20 instances, objective {obj_err:.1e}, trainer {net_err:.1e}, tangency {tangency:.1e}"
    ))
}

/// Objective on an arbitrary positive matrix, written out term by term so the
/// finite differences do not route through the library under test.
fn free_objective(w: &Matrix, p: &ProbMatrix, beta: f64) -> f64 {
    let b = w.rows() as f64;
    let mut col = vec![0.0; w.cols()];
    let mut acc = 0.0;
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let x = w.get(i, j);
            acc += -x * p.get(i, j).ln() + (1.0 - beta) * x * x.ln();
            col[j] += x / b;
        }
    }
    acc / b + beta * col.iter().map(|c| c * c.ln()).sum::<f64>()
}

fn toy_training() -> Check {
    let data = BlobConfig::default().generate().map_err(|e| e.to_string())?;
    let floor = 0.25 * (4f64).ln();
    let mut summary = Vec::new();
    for seed in 1..=5u64 {
        let start = Instant::now();
        let run = train(&data, &TrainConfig { seed, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        ensure(run.diverged_at.is_none(), || format!("seed {seed} diverged"))?;
        let acc = run.history.last().map(|r| r.accuracy).unwrap_or(0.0);
        let min_h = run.history.iter().skip(5).map(|r| r.marg_entropy).fold(f64::INFINITY, f64::min);
        ensure(acc >= 0.8, || format!("seed {seed} accuracy {acc}"))?;
        ensure(min_h >= floor, || format!("seed {seed} entropy {min_h}"))?;
        ensure(secs < 120.0, || format!("seed {seed} took {secs:.0}s"))?;
        summary.push(format!("s{seed} acc {acc:.3} H>={min_h:.2} {secs:.1}s"));
    }
    Ok(summary.join(", "))
}

fn mira(args: &[&str], cwd: &Path) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mira"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    out.status.code().ok_or_else(|| "killed by signal".into())
}

/// Every file in `dir`, with `duration_ms` removed from the manifest.
fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            v.as_object_mut().unwrap().remove("duration_ms");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        files.insert(name, bytes);
    }
    Ok(files)
}

fn cli_determinism() -> Check {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let k2 = fixtures.join("b4_k2.csv").to_string_lossy().into_owned();
    let k5 = fixtures.join("b4_k5.csv").to_string_lossy().into_owned();
    let commands: Vec<Vec<&str>> = vec![
        vec!["generate", "--rows", "16", "--cols", "6", "--seed", "3"],
        vec!["solve", &k5],
        vec!["oracle-check", &k2],
        vec!["convergence-bench", "--sizes", "64x16", "--betas", "0.5", "--seeds", "0,1"],
        vec!["train-toy", "--epochs", "3", "--points", "512"],
    ];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (n, cmd) in commands.iter().enumerate() {
        let name = cmd[0];
        let mut snaps = Vec::new();
        for run in ["a", "b"] {
            let cwd = root.path().join(format!("{n}{run}"));
            std::fs::create_dir_all(&cwd).map_err(|e| e.to_string())?;
            let mut args = cmd.clone();
            args.extend(["-o", "out"]);
            let code = mira(&args, &cwd)?;
            ensure(code == 0, || format!("{name} exited {code}"))?;
            snaps.push(snapshot(&cwd.join("out"))?);
        }
        let cwd = root.path().join(format!("{n}a"));
        let code = mira(&["rerun", "out/manifest.json", "-o", "replay"], &cwd)?;
        ensure(code == 0, || format!("rerun of {name} exited {code}"))?;
        snaps.push(snapshot(&cwd.join("replay"))?);
        for (label, other) in [("second run", &snaps[1]), ("rerun", &snaps[2])] {
            ensure(snaps[0].keys().eq(other.keys()), || format!("{name}: {label} wrote different files"))?;
            for (file, bytes) in &snaps[0] {
                ensure(other[file] == *bytes, || format!("{name}: {label} differs in {file}"))?;
            }
        }
        checked += snaps[0].len();
    }
    Ok(format!("5 commands, {checked} files byte-identical across runs and reruns"))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle agreement", oracle_agreement),
        ("kkt at scale", kkt_at_scale),
        ("beta zero identity", beta_zero_identity),
        ("fixed-point rate", fixed_point_rate),
        ("mi dominance", mi_dominance),
        ("sinkhorn marginals", sinkhorn_marginals),
        ("objective identity", objective_identity),
        ("gradients", gradients),
        ("toy training", toy_training),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = Vec::new();
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", n + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name}: {why}", n + 1);
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
