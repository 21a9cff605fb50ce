//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//! `cargo test -p lapden --test acceptance`

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use lapden::data_io::{decode_pgm, encode_pgm, format_csv_1d, parse_csv_1d};
use lapden::experiment::{
    clean_jumps, clean_sine, clean_surface, compare_1d, compare_2d, figure_settings, run_experiment, ExperimentConfig,
    Figure, DELTA_1D, DELTA_2D,
};
use lapden::grid_ops::build_d0;
use lapden::nl_filter::{
    self, denoise_1d, denoise_2d, flux, stationary_residual_1d, stationary_residual_2d, FilterParams, LambdaRule,
    Solver, TimeStep,
};
use lapden::signals::{add_noise, compute_metrics, NoiseSpec};
use lapden::tv_baseline::{
    tv_denoise_1d, tv_denoise_2d, tv_stationary_residual_1d, tv_stationary_residual_2d, TvParams,
};
use lapden::{Field2D, Signal1D};

/// Restored relative error of the new method on the seed-1 sine instance,
/// frozen when the suite was first run.
const SINE_BASELINE_REL_ERR: f64 = 0.046734495962452605;
const REGRESSION_SLACK: f64 = 0.10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

struct Rng(u64);

impl Rng {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next()).collect()
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn operator_convergence() -> Outcome {
    let start = Instant::now();
    let errs: Vec<f64> = [50usize, 100, 200, 400]
        .iter()
        .map(|&n| {
            let h = 1.0 / n as f64;
            let m = n - 1;
            let u: Vec<f64> = (1..=m).map(|i| (2.0 * PI * i as f64 * h).sin()).collect();
            let y = build_d0(m, h).unwrap().apply(&u).unwrap();
            // the two closure rows approximate a different operator
            (1..m - 1)
                .map(|k| (y[k] + 4.0 * PI * PI * (2.0 * PI * (k + 1) as f64 * h).sin()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let secs = start.elapsed().as_secs_f64();
    let ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.3) && secs < 1.0;
    check(ok, format!("orders {orders:.3?}, {secs:.3} s"))
}

/// Dense `u - dt (D1 F(D0 u) + lambda (u - u0))`, built entry by entry.
fn dense_step_1d(u: &[f64], u0: &[f64], h: f64, p: &FilterParams, lambda: f64, dt: f64) -> Vec<f64> {
    let n = u.len();
    let s = 1.0 / (h * h);
    let mut d0 = vec![vec![0.0; n]; n];
    for i in 0..n {
        d0[i][i] = -2.0 * s;
        if i > 0 {
            d0[i][i - 1] = s;
        }
        if i + 1 < n {
            d0[i][i + 1] = s;
        }
    }
    let mut d1 = d0.clone();
    d0[0][0] = -s;
    d0[n - 1][n - 1] = -s;
    d1[0][0] = -2.0 * s;
    let mv = |a: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    let w: Vec<f64> = mv(&d0, u).iter().map(|&x| flux(x, p.epsilon, p.p)).collect();
    let a = mv(&d1, &w);
    (0..n).map(|i| u[i] - dt * (a[i] + lambda * (u[i] - u0[i]))).collect()
}

/// Dense step in 2D using ghost-padded copies.
fn dense_step_2d(u: &Field2D, u0: &Field2D, p: &FilterParams, lambda: f64, dt: f64) -> Vec<f64> {
    let lap = |f: &Field2D, mirror: bool| -> Field2D {
        let (r, c) = (f.rows as isize, f.cols as isize);
        let at = |i: isize, j: isize| {
            let inside = (0..r).contains(&i) && (0..c).contains(&j);
            if inside {
                f.get(i as usize, j as usize)
            } else if mirror {
                let fold = |k: isize, m: isize| if k < 0 { -k } else if k >= m { 2 * (m - 1) - k } else { k };
                f.get(fold(i, r) as usize, fold(j, c) as usize)
            } else {
                0.0
            }
        };
        Field2D::from_fn(f.rows, f.cols, f.h, |i, j| {
            let (i, j) = (i as isize, j as isize);
            (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j)) / (f.h * f.h)
        })
        .unwrap()
    };
    let inner = lap(u, true);
    let w = inner.like(inner.values.iter().map(|&x| flux(x, p.epsilon, p.p)).collect());
    let a = lap(&w, false);
    (0..u.len()).map(|k| u.values[k] - dt * (a.values[k] + lambda * (u.values[k] - u0.values[k]))).collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng(2024);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let lambda = 2.0 * rng.next().abs();
        let epsilon = 1e-3 + rng.next().abs();
        let p = [0.5, 0.75, 1.0][k % 3];
        let (got, expected, base) = if k % 2 == 0 {
            let n = 3 + k % 6;
            let h = [1.0, 0.5, 0.1][k % 3];
            let u0 = Signal1D::new(rng.vec(n), h).unwrap();
            let dt = 0.9 * nl_filter::stable_step_bound(h, epsilon, p, lambda);
            let params = FilterParams {
                lambda: LambdaRule::Fixed(lambda),
                epsilon,
                p,
                dt: TimeStep::Fixed(dt),
                max_iters: 1,
                ..Default::default()
            };
            let (u1, _) = denoise_1d(&u0, &params).unwrap();
            let expected = dense_step_1d(&u0.values, &u0.values, h, &params, lambda, dt);
            (u1.values, expected, u0.values)
        } else {
            let h = [1.0, 0.25][(k / 2) % 2];
            let u0 = Field2D::new(rng.vec(25), 5, 5, h).unwrap();
            let warm = Field2D::new(rng.vec(25), 5, 5, h).unwrap();
            let dt = 0.9 * nl_filter::stable_step_bound_2d(h, epsilon, p, lambda);
            let params = FilterParams {
                lambda: LambdaRule::Fixed(lambda),
                epsilon,
                p,
                dt: TimeStep::Fixed(dt),
                max_iters: 1,
                ..Default::default()
            };
            let (u1, _) = denoise_2d(&u0, &params, Some(&warm)).unwrap();
            let expected = dense_step_2d(&warm, &u0, &params, lambda, dt);
            (u1.values, expected, warm.values)
        };
        // relative to the size of the update, which is stricter than
        // relative to the iterate
        let increment: Vec<f64> = expected.iter().zip(&base).map(|(e, b)| e - b).collect();
        worst = worst.max(max_abs_diff(&got, &expected) / max_abs(&increment));
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-12 && secs < 5.0, format!("100 instances, worst relative deviation {worst:.2e}, {secs:.3} s"))
}

fn equilibrium_certificate() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, converged: bool, residual: f64, tol: f64| {
        let pass = converged && residual <= 10.0 * tol;
        ok &= pass;
        lines.push(format!("{name} {residual:.1e}{}", if converged { "" } else { " (not converged)" }));
    };

    let fig2 = figure_settings(Figure::Fig2, 1);
    for (seed, solver) in [(1, Solver::SemiImplicit), (2, Solver::SemiImplicit), (3, Solver::ExplicitEuler)] {
        let noisy = add_noise(&clean_sine(100).unwrap(), &NoiseSpec { seed, delta_rel: DELTA_1D }).unwrap();
        let params = FilterParams { solver, ..fig2.nl.clone() };
        let (u, t) = denoise_1d(&noisy, &params).unwrap();
        let res = stationary_residual_1d(&u, &noisy, &params, t.final_lambda().unwrap()).unwrap();
        record(&format!("nl-1d-s{seed}"), t.converged, res, params.tol);
    }
    for seed in [1, 2] {
        let noisy = add_noise(&clean_sine(100).unwrap(), &NoiseSpec { seed, delta_rel: DELTA_1D }).unwrap();
        let (u, t) = tv_denoise_1d(&noisy, &fig2.tv).unwrap();
        record(&format!("tv-1d-s{seed}"), t.converged, tv_stationary_residual_1d(&u, &noisy, &fig2.tv).unwrap(), fig2.tv.tol);
    }
    let fig3 = figure_settings(Figure::Fig3, 1);
    let noisy = add_noise(&clean_jumps(100).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_1D }).unwrap();
    let (u, t) = denoise_1d(&noisy, &fig3.nl).unwrap();
    let res = stationary_residual_1d(&u, &noisy, &fig3.nl, t.final_lambda().unwrap()).unwrap();
    record("nl-1d-jumps", t.converged, res, fig3.nl.tol);

    let fig5 = figure_settings(Figure::Fig5, 1);
    let noisy = add_noise(&clean_surface(64).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_2D }).unwrap();
    let (u, t) = denoise_2d(&noisy, &fig5.nl, None).unwrap();
    let res = stationary_residual_2d(&u, &noisy, &fig5.nl, t.final_lambda().unwrap()).unwrap();
    record("nl-2d", t.converged, res, fig5.nl.tol);
    let (u, t) = tv_denoise_2d(&noisy, &fig5.tv).unwrap();
    record("tv-2d", t.converged, tv_stationary_residual_2d(&u, &noisy, &fig5.tv).unwrap(), fig5.tv.tol);

    check(ok, format!("{} runs: {}", lines.len(), lines.join(", ")))
}

fn equivariance() -> Outcome {
    let mut rng = Rng(77);
    // a fixed number of steps, so both sides stop at the same iteration
    let nl = FilterParams { lambda: LambdaRule::Fixed(2.0), max_iters: 100, tol: 1e-300, ..Default::default() };
    let tv = TvParams { lambda: 2.0, beta: 1e-2, max_iters: 100, tol: 1e-300, ..Default::default() };
    let nl_1d = |u: &Signal1D| denoise_1d(u, &nl).unwrap().0.values;
    let tv_1d = |u: &Signal1D| tv_denoise_1d(u, &tv).unwrap().0.values;
    let nl_2d = |u: &Field2D| denoise_2d(u, &nl, None).unwrap().0;
    let tv_2d = |u: &Field2D| tv_denoise_2d(u, &tv).unwrap().0;

    let mut worst = 0.0f64;
    let mut negation_exact = true;
    for trial in 0..5 {
        let u0 = Signal1D::new(rng.vec(20 + trial), 1.0).unwrap();
        let neg = u0.like(u0.values.iter().map(|v| -v).collect());
        let shifted = u0.like(u0.values.iter().map(|v| v + 2.5).collect());
        let rev = u0.like(u0.values.iter().rev().copied().collect());
        for run in [&nl_1d as &dyn Fn(&Signal1D) -> Vec<f64>, &tv_1d] {
            let base = run(&u0);
            negation_exact &= run(&neg).iter().zip(&base).all(|(a, b)| *a == -b);
            let s: Vec<f64> = run(&shifted).iter().map(|v| v - 2.5).collect();
            worst = worst.max(max_abs_diff(&s, &base));
            let r: Vec<f64> = run(&rev).into_iter().rev().collect();
            worst = worst.max(max_abs_diff(&r, &base));
        }

        let f0 = Field2D::new(rng.vec(81), 9, 9, 1.0).unwrap();
        let neg = f0.like(f0.values.iter().map(|v| -v).collect());
        let shifted = f0.like(f0.values.iter().map(|v| v - 1.5).collect());
        for run in [&nl_2d as &dyn Fn(&Field2D) -> Field2D, &tv_2d] {
            let base = run(&f0);
            negation_exact &= run(&neg).values.iter().zip(&base.values).all(|(a, b)| *a == -b);
            let s: Vec<f64> = run(&shifted).values.iter().map(|v| v + 1.5).collect();
            worst = worst.max(max_abs_diff(&s, &base.values));
            worst = worst.max(max_abs_diff(&run(&f0.rot90()).values, &base.rot90().values));
            worst = worst.max(max_abs_diff(&run(&f0.flip_cols()).values, &base.flip_cols().values));
            worst = worst.max(max_abs_diff(&run(&f0.flip_rows()).values, &base.flip_rows().values));
        }
    }
    check(
        negation_exact && worst <= 1e-10,
        format!("negation bit-exact: {negation_exact}; shift/mirror/rotation/flip max deviation {worst:.1e}"),
    )
}

fn sine_reproduction() -> Outcome {
    let start = Instant::now();
    let settings = figure_settings(Figure::Fig2, 1);
    let cmp = compare_1d(clean_sine(100).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_1D }, &settings).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (nl, tv) = (cmp.nl.metrics.rel_err, cmp.tv.metrics.rel_err);
    let limit = SINE_BASELINE_REL_ERR * (1.0 + REGRESSION_SLACK);
    check(
        nl < DELTA_1D && tv < DELTA_1D && nl <= limit && secs < 60.0,
        format!("new {nl:.5} (limit {limit:.5}), TV {tv:.5}, noisy {:.5}, {secs:.2} s", cmp.metrics_noisy.rel_err),
    )
}

fn staircase_and_jumps() -> Outcome {
    let fig2 = figure_settings(Figure::Fig2, 1);
    let sine = compare_1d(clean_sine(100).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_1D }, &fig2).unwrap();
    let (p_tv, p_nl) = (sine.tv.metrics.plateau_fraction, sine.nl.metrics.plateau_fraction);

    let fig3 = figure_settings(Figure::Fig3, 1);
    let g = compare_1d(clean_jumps(100).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_1D }, &fig3).unwrap();
    // the jumps have height 2
    let u = &g.nl.restored.values;
    let jumps = u.windows(2).filter(|w| (w[1] - w[0]).abs() > 1.0).count();
    // with n = 100 each jump node is a grid point holding the midpoint value,
    // so the step is also checked across the two cells around every node
    let spans: Vec<f64> = [20, 40, 60, 80].iter().map(|&k| (u[k + 1] - u[k - 1]).abs()).collect();
    let all_located = spans.iter().all(|&d| d > 1.0);
    let (rel, noisy) = (g.nl.metrics.rel_err, g.metrics_noisy.rel_err);
    check(
        p_tv > p_nl && jumps == 4 && all_located && rel < noisy,
        format!(
            "sine plateau TV {p_tv:.3} vs new {p_nl:.3}; g: {jumps} differences above 1, steps at 0.2/0.4/0.6/0.8 {spans:.2?}, rel_err {rel:.4} < noisy {noisy:.4}"
        ),
    )
}

fn surface_reproduction() -> Outcome {
    let start = Instant::now();
    let settings = figure_settings(Figure::Fig5, 1);
    let cmp = compare_2d(clean_surface(64).unwrap(), &NoiseSpec { seed: 1, delta_rel: DELTA_2D }, &settings).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rel = cmp.nl.metrics.rel_err;
    check(
        rel < DELTA_2D && secs < 600.0,
        format!("new {rel:.5}, TV {:.5}, {} iterations, {secs:.2} s", cmp.tv.metrics.rel_err, cmp.nl.trace.iters_run),
    )
}

fn adaptive_lambda() -> Outcome {
    let clean = clean_sine(100).unwrap();
    let noisy = add_noise(&clean, &NoiseSpec { seed: 1, delta_rel: DELTA_1D }).unwrap();
    // the noise norm, with unit quadrature weight
    let delta = DELTA_1D * norm(&clean.values);
    let base = figure_settings(Figure::Fig2, 1).nl;
    let mut lines = Vec::new();
    let mut ok = true;
    for solver in [Solver::SemiImplicit, Solver::ExplicitEuler] {
        let params = FilterParams { lambda: LambdaRule::Adaptive { target_delta: delta }, solver, ..base.clone() };
        let (u, t) = denoise_1d(&noisy, &params).unwrap();
        let fid = norm(&u.values.iter().zip(&noisy.values).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dev = (fid - delta).abs() / delta;
        ok &= t.converged && dev <= 0.05;
        lines.push(format!("{solver:?}: |u-u0| {fid:.4} vs {delta:.4} ({:.2}%), lambda {:.4}", 100.0 * dev, t.final_lambda().unwrap()));
    }
    check(ok, lines.join("; "))
}

fn noise_calibration() -> Outcome {
    let mut worst = 0.0f64;
    for seed in [1, 2, 3, 42, u64::MAX] {
        for clean in [clean_sine(100).unwrap(), clean_jumps(100).unwrap()] {
            let noisy = add_noise(&clean, &NoiseSpec { seed, delta_rel: DELTA_1D }).unwrap();
            worst = worst.max((compute_metrics(&noisy, &clean, 0.0).unwrap().rel_err - DELTA_1D).abs());
        }
        for n in [64, 200] {
            let clean = clean_surface(n).unwrap();
            let noisy = add_noise(&clean, &NoiseSpec { seed, delta_rel: DELTA_2D }).unwrap();
            worst = worst.max((compute_metrics(&noisy, &clean, 0.0).unwrap().rel_err - DELTA_2D).abs());
        }
    }
    check(worst <= 1e-12, format!("max |measured - requested| {worst:.1e}"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        // reports carry wall-clock times
        .filter(|p| p.extension().is_some_and(|e| e != "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn io_exactness() -> Outcome {
    let mut rng = Rng(9);
    let mut csv_exact = true;
    for n in [3, 17, 101] {
        let mut values = rng.vec(n);
        values[0] = 1e-300;
        values[1] = -123_456_789.123_456_78;
        let s = Signal1D::new(values, 0.1 + rng.next().abs()).unwrap();
        csv_exact &= parse_csv_1d(&format_csv_1d(&s)).unwrap() == s;
    }

    let mut pgm_worst = 0.0f64;
    for (r, c) in [(3, 3), (31, 17), (64, 64)] {
        let f = Field2D::from_fn(r, c, 1.0, |_, _| 0.6 * rng.next() + 0.5).unwrap();
        let back = decode_pgm(&encode_pgm(&f).unwrap()).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            pgm_worst = pgm_worst.max((a.clamp(0.0, 1.0) - b).abs());
        }
    }

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut identical = true;
    let mut count = 0;
    for fig in Figure::ALL {
        let runs: Vec<Vec<(String, Vec<u8>)>> = dirs
            .iter()
            .map(|d| {
                let out = d.path().join(fig.name());
                let cfg = ExperimentConfig { seed: 5, n: None, outdir: out.clone(), threads: 2 };
                run_experiment(fig, &cfg).unwrap();
                read_dir_sorted(&out)
            })
            .collect();
        count += runs[0].len();
        identical &= !runs[0].is_empty() && runs[0] == runs[1];
    }
    check(
        csv_exact && pgm_worst <= 1.0 / 510.0 && identical,
        format!(
            "CSV exact: {csv_exact}; PGM max error {pgm_worst:.2e} (bound {:.2e}); {count} experiment artifacts identical: {identical}",
            1.0 / 510.0
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("operator correctness", operator_convergence),
        ("oracle equivalence", oracle_equivalence),
        ("equilibrium certificate", equilibrium_certificate),
        ("equivariance suite", equivariance),
        ("1D sine reproduction", sine_reproduction),
        ("staircase comparison", staircase_and_jumps),
        ("2D surface reproduction", surface_reproduction),
        ("adaptive lambda closed loop", adaptive_lambda),
        ("noise calibration", noise_calibration),
        ("I/O bit-exactness", io_exactness),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
