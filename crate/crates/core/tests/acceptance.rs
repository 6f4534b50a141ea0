//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure. Criterion 4 needs the national completions series and reads
//! its path from `FLOWFIT_NCES_DATA`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use flowfit::diagnostics::{log_rmse, multiplicative_error, robustness, RobustOptions};
use flowfit::estimation::*;
use flowfit::io::{load_series, EXIT_OK};
use flowfit::model::*;
use flowfit::selection::*;
use nalgebra::DMatrix;
use rand::Rng;

const NCES_ENV: &str = "FLOWFIT_NCES_DATA";

/// Published grid in table order: (deg_gamma, deg_rho, forcing, k, SSE, AIC, BIC).
const TABLE: [(u8, u8, bool, usize, f64, f64, f64); 18] = [
    (2, 2, false, 15, 0.129, -619.7, -581.0),
    (2, 2, true, 16, 0.129, -617.7, -576.4),
    (1, 2, false, 13, 0.170, -597.2, -563.6),
    (1, 2, true, 14, 0.170, -594.8, -558.6),
    (2, 1, false, 12, 0.229, -569.8, -538.7),
    (2, 1, true, 13, 0.229, -567.8, -534.1),
    (1, 1, false, 10, 0.297, -548.4, -522.6),
    (1, 1, true, 11, 0.297, -546.4, -518.0),
    (0, 2, false, 11, 0.299, -545.7, -517.2),
    (0, 2, true, 12, 0.299, -543.7, -512.7),
    (0, 1, false, 8, 0.656, -474.6, -454.0),
    (0, 1, true, 9, 0.656, -472.6, -449.4),
    (2, 0, false, 9, 0.684, -468.5, -445.3),
    (2, 0, true, 10, 0.684, -466.5, -440.7),
    (0, 0, false, 5, 6.028, -263.3, -250.3),
    (0, 0, true, 6, 6.028, -261.3, -245.8),
    (1, 0, false, 7, 6.029, -259.3, -241.2),
    (1, 0, true, 8, 6.029, -257.3, -236.6),
];

/// Pooled log-RMSE by truncation start year.
const TRUNCATION: [(i32, f64); 3] = [(1974, 0.0320), (1979, 0.0321), (1984, 0.0312)];
const HINDCAST_POOLED: f64 = 0.0729;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Runner = Box<dyn FnOnce() -> Result<Outcome, String>>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ic_arithmetic() -> Check {
    let mut worst: f64 = 0.0;
    for &(g, r, f, k, sse, aic, bic) in &TABLE {
        let (a, b) = information_criteria(sse, k, 98).map_err(|e| e.to_string())?;
        let spec = ModelSpec::new(g, r, f).unwrap();
        ensure((a - aic).abs() <= 0.5, || format!("{spec}: AIC {a:.2} vs {aic}"))?;
        ensure((b - bic).abs() <= 0.5, || format!("{spec}: BIC {b:.2} vs {bic}"))?;
        worst = worst.max((a - aic).abs()).max((b - bic).abs());
    }
    Ok(format!("18 rows, max |diff| {worst:.3}"))
}

fn parameter_counts() -> Check {
    let all = ModelSpec::all();
    ensure(all.len() == 18, || format!("grid has {} specs", all.len()))?;
    for &(g, r, f, k, ..) in &TABLE {
        let spec = ModelSpec::new(g, r, f).unwrap();
        ensure(all.contains(&spec), || format!("{spec} missing from grid"))?;
        ensure(spec.n_params() == k, || format!("{spec}: k {} vs {k}", spec.n_params()))?;
    }
    let ks: Vec<usize> = TABLE
        .iter()
        .map(|&(g, r, f, ..)| ModelSpec::new(g, r, f).unwrap().n_params())
        .collect();
    Ok(format!("{ks:?}"))
}

fn rmse_bridge() -> Check {
    let r = log_rmse(0.129, 98);
    let e = multiplicative_error(r);
    ensure((0.0360..=0.0366).contains(&r), || format!("log RMSE {r}"))?;
    ensure((0.036..=0.038).contains(&e), || format!("multiplicative error {e}"))?;
    Ok(format!("log RMSE {r:.5}, e^RMSE - 1 = {:.3}%", 100.0 * e))
}

fn full_data() -> Result<Outcome, String> {
    let Some(path) = std::env::var_os(NCES_ENV) else {
        return Ok(Outcome::Skip(format!("{NCES_ENV} not set; criteria 5-10 substitute")));
    };
    let obs = load_series(Path::new(&path)).map_err(|e| e.to_string())?;
    let grid = run_grid(&obs, &GridOptions::default());
    let preferred = ModelSpec::preferred();
    for c in [Criterion::Aic, Criterion::Bic] {
        let best = select_best(&grid.entries, c).map_err(|e| e.to_string())?;
        ensure(best.spec == preferred, || format!("{c:?} selects {}", best.spec))?;
    }
    let entry = grid.entries.iter().find(|e| e.spec == preferred).unwrap();
    let sse = entry.sse().unwrap();
    ensure(sse <= 0.135, || format!("preferred SSE {sse}"))?;

    let starts: Vec<i32> = TRUNCATION.iter().map(|t| t.0).collect();
    let opts = RobustOptions::default();
    let rob = robustness(
        &obs,
        &preferred,
        &starts,
        &flowfit::io::RunConfig::default().robust.hindcast_cutoffs,
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let mut detail = format!("SSE {sse:.4}");
    for (row, &(start, want)) in rob.truncation_rows.iter().zip(&TRUNCATION) {
        let got = row.pooled_log_rmse;
        ensure((got - want).abs() <= 0.003, || {
            format!("truncation {start}: {got:.4} vs {want}")
        })?;
        detail += &format!(", {start}: {got:.4}");
    }
    let h = rob.hindcast.rmse_pooled;
    ensure((h - HINDCAST_POOLED).abs() <= 0.01, || {
        format!("hindcast pooled RMSE {h:.4} vs {HINDCAST_POOLED}")
    })?;
    Ok(Outcome::Pass(format!("{detail}, hindcast {h:.4}")))
}

fn noise_free_recovery() -> Check {
    let (s, d) = reference_data();
    let fit = fit_spec(&d.observed, &s.spec, &FitOptions::default()).map_err(|e| e.to_string())?;
    ensure(fit.sse <= 1e-10, || format!("SSE {:e}", fit.sse))?;
    let (_, sim, _) = fitted_state(&fit.theta_hat, &s.spec, &d.observed).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..d.observed.len() {
        for (a, b) in [(sim.flow_m[i], d.truth.flow_m[i]), (sim.flow_p[i], d.truth.flow_p[i])] {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    ensure(worst <= 1e-5, || format!("max relative flow error {worst:e}"))?;
    Ok(format!("SSE {:.2e}, max relative flow error {worst:.2e}", fit.sse))
}

fn selection_recovery() -> Check {
    let (s, d) = reference_data();
    let rep = run_grid(&d.observed, &GridOptions::default());
    let gen = rep
        .entries
        .iter()
        .find(|e| e.spec == s.spec)
        .ok_or("generating spec not fitted")?;
    ensure(gen.is_scored() && gen.delta_aic == 0.0, || {
        format!("generating spec dAIC {}", gen.delta_aic)
    })?;
    let mut min_const = f64::INFINITY;
    for e in rep.entries.iter().filter(|e| e.spec.deg_gamma() == 0) {
        ensure(e.delta_aic > 10.0, || format!("{}: dAIC {}", e.spec, e.delta_aic))?;
        min_const = min_const.min(e.delta_aic);
    }
    Ok(format!(
        "{} fitted, {} skipped (no forcing column); min constant-hazard dAIC {min_const:.1}",
        rep.entries.len(),
        rep.skipped.len()
    ))
}

fn oracle_equivalence() -> Check {
    let mut r = rng(20_000);
    for i in 0..100 {
        let inst = random_instance(&mut r, 20);
        check_oracle(&inst, 1e-12).map_err(|e| format!("draw {i}: {e}"))?;
    }
    Ok("100 draws, 20 years, tol 1e-12".into())
}

fn invariant_suite() -> Check {
    const N: usize = 1000;
    let mut r = rng(80_000);
    for i in 0..N {
        let years = r.random_range(2..60);
        let inst = random_instance(&mut r, years);
        let tag = |name: &'static str| move |e: String| format!("{name}, instance {i}: {e}");
        check_nonnegative(&inst).map_err(tag("nonnegativity"))?;
        check_flow_identity(&inst).map_err(tag("flow identity"))?;
        check_anchoring(&inst).map_err(tag("anchoring"))?;
        check_forgetting(&inst, &mut r).map_err(tag("forgetting"))?;
        check_superposition(&inst, &mut r).map_err(tag("superposition"))?;
        check_loss_totality(&inst, &mut r).map_err(tag("loss totality"))?;
    }
    Ok(format!("6 properties x {N} instances"))
}

fn curvature() -> Check {
    let mut r = rng(90_000);
    let mut worst_h: f64 = 0.0;
    for k in [2usize, 5, 15] {
        let b = DMatrix::from_fn(k, k, |_, _| r.random_range(-1.0..1.0));
        let a = (&b + b.transpose()) * 0.5;
        let a2 = a.clone();
        let obj = FnObjective::new(k, move |x: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            (v.transpose() * &a2 * &v)[(0, 0)]
        });
        let x: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let h = numerical_hessian(&obj, &x).map_err(|e| e.to_string())?;
        let target = &a * 2.0;
        let rel = (&h - &target).norm() / target.norm();
        ensure(rel <= 1e-4, || format!("k={k}: Hessian relative error {rel:e}"))?;
        worst_h = worst_h.max(rel);
    }
    let spec = ModelSpec::preferred();
    let grid = YearGrid::new(1969, 2017).unwrap();
    let mut worst_s: f64 = 0.0;
    for _ in 0..20 {
        let b = DMatrix::from_fn(15, 15, |_, _| r.random_range(-1.0..1.0));
        let h = &b * b.transpose() + DMatrix::identity(15, 15);
        let u = covariance(&h, 0.129, &spec, &grid).map_err(|e| e.to_string())?;
        ensure(!u.regularization_applied, || {
            "regularization fired on a well-conditioned H".into()
        })?;
        let err = (&u.covariance * &h - DMatrix::identity(15, 15) * (2.0 * u.sigma2_hat)).amax();
        ensure(err <= 1e-8, || format!("Sigma*H residual {err:e}"))?;
        worst_s = worst_s.max(err);
    }
    let u = covariance(&DMatrix::identity(15, 15), 0.129, &spec, &grid).map_err(|e| e.to_string())?;
    ensure(u.n_eff == 96, || format!("N_eff {}", u.n_eff))?;
    ensure(u.sigma2_hat == 0.129 / 81.0, || format!("sigma2 {:e}", u.sigma2_hat))?;
    Ok(format!(
        "Hessian rel err {worst_h:.1e}, Sigma*H err {worst_s:.1e}, sigma2 = {:.6e}",
        u.sigma2_hat
    ))
}

fn band_sanity() -> Check {
    let spec = ModelSpec::preferred();
    let (mut s, _) = reference_data();
    s.noise_sd = 0.03;
    s.seed = 5;
    let d = flowfit::synthetic::generate(&s).map_err(|e| e.to_string())?;
    let obs = &d.observed;
    let fit = fit_spec(obs, &spec, &FitOptions::default()).map_err(|e| e.to_string())?;
    let unc = fit_uncertainty(obs, &fit).map_err(|e| e.to_string())?;

    let mut zero = unc.clone();
    zero.covariance = DMatrix::zeros(15, 15);
    let draws = sample_parameters(&zero, &fit.theta_hat, 200, 1).map_err(|e| e.to_string())?;
    let bands = confidence_bands(&draws, &spec, obs.grid(), 0.95).map_err(|e| e.to_string())?;
    let point = eval_param_trajectories(&fit.theta_hat, &spec, obs.grid()).map_err(|e| e.to_string())?;
    for t in Trajectory::ALL {
        let (b, p) = (bands.get(t), point.get(t));
        ensure(b.lower.as_slice() == p && b.upper.as_slice() == p, || {
            format!("{} band did not collapse", t.name())
        })?;
    }

    for scale in [1.0, 1e4] {
        let mut u = unc.clone();
        u.covariance *= scale;
        let draws = sample_parameters(&u, &fit.theta_hat, 4000, 2).map_err(|e| e.to_string())?;
        let bands = confidence_bands(&draws, &spec, obs.grid(), 0.95).map_err(|e| e.to_string())?;
        for b in &bands.bands {
            for v in b.lower.iter().chain(&b.upper) {
                ensure(*v > 0.0 && *v < 1.0, || {
                    format!("{} band value {v} at covariance x{scale}", b.trajectory.name())
                })?;
            }
        }
    }

    const N: usize = 100_000;
    let mean = [0.3, -1.2];
    let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.03, 0.03, 0.09]);
    let x = sample_gaussian(&cov, &mean, N, 7).map_err(|e| e.to_string())?;
    let n = N as f64;
    let m: Vec<f64> = (0..2).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    for j in 0..2 {
        let tol = 4.0 * cov[(j, j)].sqrt() / n.sqrt();
        ensure((m[j] - mean[j]).abs() <= tol, || {
            format!("mean {j}: {} vs {}", m[j], mean[j])
        })?;
    }
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let c = x.iter().map(|r| (r[i] - m[i]) * (r[j] - m[j])).sum::<f64>() / (n - 1.0);
            let rel = (c - cov[(i, j)]).abs() / cov[(i, j)].abs();
            ensure(rel <= 0.05, || format!("cov ({i},{j}): {c} vs {}", cov[(i, j)]))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!(
        "collapse exact, bands in (0,1), 1e5-draw cov max rel err {:.2}%",
        100.0 * worst
    ))
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cli = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_flowfit")).args(args).output().unwrap();
        out.status.code().unwrap_or(-1)
    };
    let synth = tmp.path().join("synth");
    let code = cli(&[
        "synth",
        "--noise",
        "0.03",
        "--noise-seed",
        "3",
        "--out",
        synth.to_str().unwrap(),
    ]);
    ensure(code == EXIT_OK, || format!("synth exited {code}"))?;
    let data = synth.join("observed.csv");
    let mut runs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = tmp.path().join(name);
        let code = cli(&[
            "report",
            "--data",
            data.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure(code == EXIT_OK, || {
            format!("report with {threads} threads exited {code}")
        })?;
        runs.push(read_dir(&out));
    }
    for (i, run) in runs.iter().enumerate().skip(1) {
        ensure(run.keys().eq(runs[0].keys()), || {
            format!("run {i} wrote a different file set")
        })?;
        for (file, bytes) in run {
            ensure(*bytes == runs[0][file], || {
                format!("{file} differs between run 0 and run {i}")
            })?;
        }
    }
    Ok(format!(
        "{} files identical across 3 runs (1, 4, 4 threads)",
        runs[0].len()
    ))
}

fn run(f: impl FnOnce() -> Result<Outcome, String>) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(o)) => o,
        Ok(Err(msg)) => Outcome::Fail(msg),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        }
    }
}

fn plain(f: fn() -> Check) -> impl FnOnce() -> Result<Outcome, String> {
    move || f().map(Outcome::Pass)
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: Vec<(&str, Runner)> = vec![
        ("information-criterion arithmetic", Box::new(plain(ic_arithmetic))),
        ("parameter-count column", Box::new(plain(parameter_counts))),
        ("RMSE bridge", Box::new(plain(rmse_bridge))),
        ("full-data reproduction", Box::new(full_data)),
        ("noise-free recovery", Box::new(plain(noise_free_recovery))),
        ("selection recovery", Box::new(plain(selection_recovery))),
        ("oracle equivalence", Box::new(plain(oracle_equivalence))),
        ("invariant suite", Box::new(plain(invariant_suite))),
        ("curvature machinery", Box::new(plain(curvature))),
        ("band sanity", Box::new(plain(band_sanity))),
        ("determinism", Box::new(plain(determinism))),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = run(f);
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
