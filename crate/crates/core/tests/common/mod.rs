//! Independent reference implementations and random instances shared by the
//! integration tests. Nothing here calls the library's simulation code.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use flowfit::estimation::{loss, residuals};
use flowfit::model::{
    eval_param_trajectories, initialize_stocks, simulate, simulate_from, InitialStocks, ModelSpec, ObservedSeries,
    ThetaVector, Trajectory, YearGrid,
};
use flowfit::synthetic::{generate, SyntheticData, SyntheticScenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn reference_data() -> (SyntheticScenario, SyntheticData) {
    let s = SyntheticScenario::reference();
    let d = generate(&s).unwrap();
    (s, d)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-year `[rho_BM, rho_BP, rho_MP, gamma_M, gamma_P]` and `lambda`,
/// written out term by term.
pub fn oracle_params(theta: &[f64], spec: &ModelSpec, t_min: i32, t_max: i32) -> (Vec<[f64; 5]>, f64) {
    let nr = spec.deg_rho() as usize + 1;
    let ng = spec.deg_gamma() as usize + 1;
    let blocks: Vec<&[f64]> = vec![
        &theta[0..nr],
        &theta[nr..2 * nr],
        &theta[2 * nr..3 * nr],
        &theta[3 * nr..3 * nr + ng],
        &theta[3 * nr + ng..3 * nr + 2 * ng],
    ];
    let lambda = if spec.forcing() {
        theta[3 * nr + 2 * ng].max(-40.0).exp()
    } else {
        0.0
    };
    let mid = (t_min as f64 + t_max as f64) / 2.0;
    let half = (t_max - t_min) as f64 / 2.0;
    let params = (t_min..=t_max)
        .map(|t| {
            let s = (t as f64 - mid) / half;
            let mut out = [0.0; 5];
            for (o, c) in out.iter_mut().zip(&blocks) {
                let mut eta = 0.0;
                for (j, cj) in c.iter().enumerate() {
                    eta += cj * s.powi(j as i32);
                }
                *o = logistic(eta);
            }
            out
        })
        .collect();
    (params, lambda)
}

pub struct OraclePath {
    pub stock_m: Vec<f64>,
    pub stock_p: Vec<f64>,
    pub flow_m: Vec<f64>,
    pub flow_p: Vec<f64>,
}

/// Anchored recurrence: the first year's stocks are `m/gamma_M` and
/// `p/gamma_P` and its implied flows are the observations.
pub fn oracle_simulate(
    b: &[f64],
    intl: &[f64],
    params: &[[f64; 5]],
    lambda: f64,
    m_first: f64,
    p_first: f64,
) -> OraclePath {
    let n = b.len();
    let mut path = OraclePath {
        stock_m: vec![0.0; n],
        stock_p: vec![0.0; n],
        flow_m: vec![0.0; n],
        flow_p: vec![0.0; n],
    };
    let mut big_m = m_first / params[0][3];
    let mut big_p = p_first / params[0][4];
    for t in 0..n {
        let [rbm, rbp, rmp, gm, gp] = params[t];
        let (mh, ph) = if t == 0 {
            (m_first, p_first)
        } else {
            (gm * big_m, gp * big_p)
        };
        path.stock_m[t] = big_m;
        path.stock_p[t] = big_p;
        path.flow_m[t] = mh;
        path.flow_p[t] = ph;
        let next_m = big_m + rbm * b[t] - mh;
        let next_p = big_p + rbp * b[t] + rmp * mh - ph + lambda * intl[t];
        big_m = next_m;
        big_p = next_p;
    }
    path
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// One random model and data set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: ModelSpec,
    pub theta: ThetaVector,
    pub obs: ObservedSeries,
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let all = ModelSpec::all();
    all[rng.random_range(0..all.len())]
}

/// Coefficients that keep every logit within roughly ±8, so the library's
/// probability clamp never engages.
pub fn random_theta(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> ThetaVector {
    let nr = spec.deg_rho() as usize + 1;
    let ng = spec.deg_gamma() as usize + 1;
    let mut v = Vec::with_capacity(spec.n_params());
    for _ in 0..3 {
        v.push(rng.random_range(-4.0..1.5));
        for _ in 1..nr {
            v.push(rng.random_range(-1.5..1.5));
        }
    }
    for _ in 0..2 {
        v.push(rng.random_range(-3.0..1.0));
        for _ in 1..ng {
            v.push(rng.random_range(-1.5..1.5));
        }
    }
    if spec.forcing() {
        v.push(rng.random_range(-8.0..1.0));
    }
    ThetaVector::new(v)
}

pub fn random_instance(rng: &mut ChaCha8Rng, years: usize) -> Instance {
    let spec = random_spec(rng);
    let theta = random_theta(rng, &spec);
    let t_min = rng.random_range(1900..2000);
    let grid = YearGrid::new(t_min, t_min + years as i32 - 1).unwrap();
    let n = grid.len();
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let b = draw(0.0, 1e5);
    let m = draw(1.0, 5e4);
    let p = draw(1.0, 1e4);
    let intl = spec.forcing().then(|| draw(0.0, 5e3));
    let obs = ObservedSeries::new(grid, b, m, p, intl).unwrap();
    Instance { spec, theta, obs }
}

fn intl_or_zero(obs: &ObservedSeries) -> Vec<f64> {
    obs.phd_intl().map_or_else(|| vec![0.0; obs.len()], <[f64]>::to_vec)
}

/// Library simulation against the hand-written recurrence.
pub fn check_oracle(inst: &Instance, tol: f64) -> Result<(), String> {
    let g = inst.obs.grid();
    let (params, lambda) = oracle_params(inst.theta.as_slice(), &inst.spec, g.t_min(), g.t_max());
    let o = oracle_simulate(
        inst.obs.bachelors(),
        &intl_or_zero(&inst.obs),
        &params,
        lambda,
        inst.obs.masters()[0],
        inst.obs.phd()[0],
    );
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, g).map_err(|e| e.to_string())?;
    for (i, row) in params.iter().enumerate() {
        for (k, t) in Trajectory::ALL.iter().enumerate() {
            if !rel_close(traj.get(*t)[i], row[k], tol) {
                return Err(format!("{} at index {i}: {} vs {}", t.name(), traj.get(*t)[i], row[k]));
            }
        }
    }
    let sim = simulate(&inst.obs, &traj, &inst.spec).map_err(|e| e.to_string())?;
    let pairs = [
        ("M", &sim.stock_m, &o.stock_m),
        ("P", &sim.stock_p, &o.stock_p),
        ("m_hat", &sim.flow_m, &o.flow_m),
        ("p_hat", &sim.flow_p, &o.flow_p),
    ];
    for (name, got, want) in pairs {
        for (i, (a, b)) in got.iter().zip(want.iter()).enumerate() {
            if !rel_close(*a, *b, tol) {
                return Err(format!("{name} at index {i}: {a} vs {b} ({})", inst.spec));
            }
        }
    }
    Ok(())
}

pub fn check_nonnegative(inst: &Instance) -> Result<(), String> {
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, inst.obs.grid()).unwrap();
    let sim = simulate(&inst.obs, &traj, &inst.spec).unwrap();
    let all = sim
        .stock_m
        .iter()
        .chain(&sim.stock_p)
        .chain([&sim.next_stocks.0, &sim.next_stocks.1]);
    for v in all {
        if !(*v >= 0.0) {
            return Err(format!("negative stock {v} ({})", inst.spec));
        }
    }
    Ok(())
}

/// `m_hat = gamma_M * M` and `p_hat = gamma_P * P`, bitwise after the
/// anchored first year and to one rounding at it.
pub fn check_flow_identity(inst: &Instance) -> Result<(), String> {
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, inst.obs.grid()).unwrap();
    let sim = simulate(&inst.obs, &traj, &inst.spec).unwrap();
    let gm = traj.get(Trajectory::GammaM);
    let gp = traj.get(Trajectory::GammaP);
    for i in 0..inst.obs.len() {
        let (em, ep) = (gm[i] * sim.stock_m[i], gp[i] * sim.stock_p[i]);
        let ok = if i == 0 {
            rel_close(sim.flow_m[0], em, 4.0 * f64::EPSILON) && rel_close(sim.flow_p[0], ep, 4.0 * f64::EPSILON)
        } else {
            sim.flow_m[i] == em && sim.flow_p[i] == ep
        };
        if !ok {
            return Err(format!("flow identity fails at index {i}"));
        }
    }
    Ok(())
}

pub fn check_anchoring(inst: &Instance) -> Result<(), String> {
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, inst.obs.grid()).unwrap();
    let sim = simulate(&inst.obs, &traj, &inst.spec).unwrap();
    let init = initialize_stocks(&inst.obs, &traj).unwrap();
    if sim.stock_m[0] != init.m0 || sim.stock_p[0] != init.p0 {
        return Err("first-year stocks differ from the anchored ones".into());
    }
    let r = residuals(&inst.obs, &sim).map_err(|e| e.to_string())?;
    if r.r_m[0] != 0.0 || r.r_p[0] != 0.0 {
        return Err(format!("first-year residuals {} {}", r.r_m[0], r.r_p[0]));
    }
    Ok(())
}

/// Two runs differing only in initial stocks: the master's gap decays by
/// exactly `prod (1 - gamma_M)`, and with only the PhD stock perturbed the
/// PhD gap follows `prod (1 - gamma_P)` and shrinks every year.
pub fn check_forgetting(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, inst.obs.grid()).unwrap();
    let base = initialize_stocks(&inst.obs, &traj).unwrap();
    let run = |m0: f64, p0: f64| simulate_from(&inst.obs, &traj, &inst.spec, InitialStocks { m0, p0 }).unwrap();
    let a = run(base.m0, base.p0);
    let dm = base.m0 * rng.random_range(0.1..1.0);
    let b = run(base.m0 + dm, base.p0);
    let gm = traj.get(Trajectory::GammaM);
    let gp = traj.get(Trajectory::GammaP);
    let scale_m = a.stock_m.iter().chain(&b.stock_m).fold(0.0f64, |s, v| s.max(v.abs()));
    let mut prod = dm;
    for i in 0..inst.obs.len() {
        let got = b.stock_m[i] - a.stock_m[i];
        if (got - prod).abs() > 1e-12 * scale_m * (i + 1) as f64 {
            return Err(format!("master's gap {got} vs product {prod} at index {i}"));
        }
        prod *= 1.0 - gm[i];
    }
    let dp = base.p0 * rng.random_range(0.1..1.0);
    let c = run(base.m0, base.p0 + dp);
    let scale_p = a.stock_p.iter().chain(&c.stock_p).fold(0.0f64, |s, v| s.max(v.abs()));
    let noise = 1e-12 * scale_p * inst.obs.len() as f64;
    let mut prod = dp;
    let mut prev = f64::INFINITY;
    for i in 0..inst.obs.len() {
        let got = c.stock_p[i] - a.stock_p[i];
        if (got - prod).abs() > noise {
            return Err(format!("PhD gap {got} vs product {prod} at index {i}"));
        }
        if prev - got < -noise {
            return Err(format!("PhD gap grew at index {i}: {prev} -> {got}"));
        }
        if prev - prod > 2.0 * noise && got >= prev {
            return Err(format!("PhD gap did not shrink at index {i}"));
        }
        prev = got;
        prod *= 1.0 - gp[i];
    }
    // Contraction bound with both stocks perturbed.
    let d = run(base.m0 + dm, base.p0 + dp);
    let rmp = traj.get(Trajectory::RhoMP);
    for i in 0..inst.obs.len() - 1 {
        let (em, ep) = (d.stock_m[i] - a.stock_m[i], d.stock_p[i] - a.stock_p[i]);
        let bound = (1.0 - gp[i]) * ep.abs() + rmp[i] * gm[i] * em.abs();
        let next = (d.stock_p[i + 1] - a.stock_p[i + 1]).abs();
        if next > bound + noise {
            return Err(format!("PhD contraction bound fails at index {i}"));
        }
    }
    Ok(())
}

/// Stocks are affine in the initial state.
pub fn check_superposition(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let traj = eval_param_trajectories(&inst.theta, &inst.spec, inst.obs.grid()).unwrap();
    let run = |m0: f64, p0: f64| simulate_from(&inst.obs, &traj, &inst.spec, InitialStocks { m0, p0 }).unwrap();
    let (m1, p1) = (rng.random_range(0.0..1e5), rng.random_range(0.0..1e5));
    let (m2, p2) = (rng.random_range(0.0..1e5), rng.random_range(0.0..1e5));
    let w = rng.random_range(-2.0..3.0);
    let a = run(m1, p1);
    let b = run(m2, p2);
    let c = run(w * m1 + (1.0 - w) * m2, w * p1 + (1.0 - w) * p2);
    let scale = a
        .stock_m
        .iter()
        .chain(&a.stock_p)
        .chain(&b.stock_m)
        .chain(&b.stock_p)
        .fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale * (1.0 + w.abs()) * inst.obs.len() as f64;
    let series = [
        (&a.stock_m, &b.stock_m, &c.stock_m),
        (&a.stock_p, &b.stock_p, &c.stock_p),
        (&a.flow_m, &b.flow_m, &c.flow_m),
        (&a.flow_p, &b.flow_p, &c.flow_p),
    ];
    for (x, y, z) in series {
        for i in 0..x.len() {
            let want = w * x[i] + (1.0 - w) * y[i];
            if (z[i] - want).abs() > tol {
                return Err(format!("superposition fails at index {i}: {} vs {want}", z[i]));
            }
        }
    }
    Ok(())
}

/// The loss is finite and nonnegative for every finite parameter vector,
/// including wildly out-of-range ones.
pub fn check_loss_totality(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let k = inst.spec.n_params();
    let v: Vec<f64> = (0..k)
        .map(|_| match rng.random_range(0..6) {
            0 => rng.random_range(-1e300..1e300),
            1 => rng.random_range(-1e3..1e3),
            2 => 0.0,
            3 => {
                if rng.random::<bool>() {
                    f64::MAX
                } else {
                    f64::MIN
                }
            }
            _ => rng.random_range(-30.0..30.0),
        })
        .collect();
    let theta = ThetaVector::new(v);
    let value = loss(&theta, &inst.spec, &inst.obs).map_err(|e| e.to_string())?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(format!("loss {value} at {:?}", theta.as_slice()));
    }
    Ok(())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
