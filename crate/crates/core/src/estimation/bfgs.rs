use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gradient_fd, Objective, SseObjective, INVALID_YEAR_PENALTY};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservedSeries, ThetaVector};

/// Stopping and line-search settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    /// Iteration cap per start.
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls to this value.
    pub grad_tol: f64,
    /// Stop when an iteration lowers the loss by at most this fraction.
    pub rel_tol: f64,
    /// A stopped run counts as converged only if its gradient max-norm is
    /// at most this value.
    pub converged_grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Maximum step halvings per line search.
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-6,
            rel_tol: 1e-12,
            converged_grad_tol: 1e-4,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    IterationLimit,
    LineSearchFailure,
    NonFiniteStart,
}

/// Outcome of one BFGS run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
    pub converged: bool,
    /// Loss at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `obj` from `x0` with BFGS on the inverse Hessian, a backtracking
/// Armijo line search and central-difference gradients.
///
/// When a line search fails or an iteration makes negligible progress with a
/// curvature estimate in use, the estimate is reset to the identity and the
/// iteration retried; the run stops only if steepest descent also stalls.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &BfgsOptions) -> LocalMinimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut f = obj.value(x.as_slice());
    if x0.iter().any(|v| !v.is_finite()) || !f.is_finite() {
        return LocalMinimum {
            x: x0.to_vec(),
            value: f,
            iterations: 0,
            grad_norm: f64::INFINITY,
            termination: Termination::NonFiniteStart,
            converged: false,
            history: vec![f],
        };
    }
    let mut g = DVector::from_vec(gradient_fd(obj, x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut scaled = false;
    let mut history = vec![f];
    let mut iterations = 0;
    let termination = loop {
        if max_norm(&g) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::IterationLimit;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &x + &dir * alpha;
            let ft = obj.value(trial.as_slice());
            if ft <= f + opts.armijo * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break Termination::LineSearchFailure;
            }
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        iterations += 1;
        let decrease = f - f_new;
        let g_new = DVector::from_vec(gradient_fd(obj, x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if decrease <= opts.rel_tol * history[history.len() - 2].abs() {
            if fresh {
                break Termination::RelativeDecrease;
            }
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        }
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if !scaled {
                h_inv *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
    };
    let grad_norm = max_norm(&g);
    let converged =
        termination != Termination::IterationLimit && grad_norm <= opts.converged_grad_tol && f < INVALID_YEAR_PENALTY;
    LocalMinimum {
        x: x.as_slice().to_vec(),
        value: f,
        iterations,
        grad_norm,
        termination,
        converged,
        history,
    }
}

/// Summary of one start of a multi-start fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub sse: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
    pub converged: bool,
}

/// Best local minimum of the log-scale SSE across several starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta_hat: ThetaVector,
    pub sse: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub n_starts_used: usize,
    pub grad_norm_at_opt: f64,
    pub termination: Termination,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
    /// Set when no start left the penalty region.
    pub failure: Option<String>,
}

/// Run [`minimize`] from every start in parallel and keep the lowest loss;
/// ties go to the earlier start, so the result does not depend on thread
/// scheduling.
pub fn minimize_bfgs(
    spec: &ModelSpec,
    obs: &ObservedSeries,
    starts: &[ThetaVector],
    opts: &BfgsOptions,
) -> Result<FitResult> {
    let obj = SseObjective::new(*spec, obs)?;
    minimize_objective(&obj, *spec, starts, opts)
}

pub(crate) fn minimize_objective<O: Objective>(
    obj: &O,
    spec: ModelSpec,
    starts: &[ThetaVector],
    opts: &BfgsOptions,
) -> Result<FitResult> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    for s in starts {
        s.check(&spec)?;
    }
    let runs: Vec<LocalMinimum> = starts.par_iter().map(|s| minimize(obj, s.as_slice(), opts)).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.value.is_nan())
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .map_or(0, |(i, _)| i);
    let r = &runs[best];
    let failure = (!(r.value < INVALID_YEAR_PENALTY))
        .then(|| "every start stayed in the invalid-flow penalty region".to_string());
    Ok(FitResult {
        spec,
        theta_hat: ThetaVector::new(r.x.clone()),
        sse: r.value,
        converged: r.converged && failure.is_none(),
        n_iterations: r.iterations,
        n_starts_used: runs.len(),
        grad_norm_at_opt: r.grad_norm,
        termination: r.termination,
        best_start: best,
        starts: runs
            .iter()
            .map(|r| StartSummary {
                sse: r.value,
                iterations: r.iterations,
                grad_norm: r.grad_norm,
                termination: r.termination,
                converged: r.converged,
            })
            .collect(),
        failure,
    })
}
