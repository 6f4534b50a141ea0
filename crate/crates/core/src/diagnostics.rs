//! Residual diagnostics and the two robustness protocols: start-year
//! truncation and rolling-origin one-step-ahead hindcasts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_spec, fitted_state, residuals, FitOptions, FitResult};
use crate::model::{step, ModelSpec, ObservedSeries, ParamPoint, SimulationResult, ThetaVector};

/// Histogram bin width on the log-residual scale.
pub const BIN_WIDTH: f64 = 0.02;
/// Number of regular bins; they cover `[-0.12, 0.12)`.
pub const N_BINS: usize = 12;

/// `sqrt(SSE / N)`.
pub fn log_rmse(sse: f64, n: usize) -> f64 {
    (sse / n as f64).sqrt()
}

/// Typical multiplicative error implied by a log-scale RMSE, `e^rmse - 1`.
pub fn multiplicative_error(rmse: f64) -> f64 {
    rmse.exp_m1()
}

/// Counts in fixed bins of width [`BIN_WIDTH`] over `[-0.12, 0.12)`, plus
/// an underflow and an overflow bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub underflow: usize,
    pub bins: [usize; N_BINS],
    pub overflow: usize,
}

impl Histogram {
    /// Lower edge of regular bin `i`; bin 6 starts exactly at zero.
    pub fn lower_edge(i: usize) -> f64 {
        (i as f64 - (N_BINS / 2) as f64) * BIN_WIDTH
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut h = Histogram {
            underflow: 0,
            bins: [0; N_BINS],
            overflow: 0,
        };
        for &v in values {
            if v < Self::lower_edge(0) {
                h.underflow += 1;
            } else if v >= Self::lower_edge(N_BINS) {
                h.overflow += 1;
            } else {
                let i = (0..N_BINS).rev().find(|&i| v >= Self::lower_edge(i)).unwrap_or(0);
                h.bins[i] += 1;
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.underflow + self.overflow + self.bins.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl SeriesSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            sd: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            histogram: Histogram::from_values(values),
        }
    }
}

/// Per-year residuals with distribution summaries for each series.
///
/// Summaries cover every grid year, including the anchored first year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub years: Vec<i32>,
    pub r_m: Vec<f64>,
    pub r_p: Vec<f64>,
    pub masters: SeriesSummary,
    pub phd: SeriesSummary,
    pub sse: f64,
    pub log_rmse: f64,
}

impl ResidualReport {
    /// Share of all residuals with `|r| <= bound`.
    pub fn share_within(&self, bound: f64) -> f64 {
        let all = self.r_m.iter().chain(&self.r_p);
        let n = self.r_m.len() + self.r_p.len();
        all.filter(|r| r.abs() <= bound).count() as f64 / n as f64
    }
}

pub fn residual_report(obs: &ObservedSeries, sim: &SimulationResult) -> Result<ResidualReport> {
    let res = residuals(obs, sim)?;
    let sse = res.sse();
    Ok(ResidualReport {
        years: obs.grid().years().collect(),
        masters: SeriesSummary::of(&res.r_m),
        phd: SeriesSummary::of(&res.r_p),
        sse,
        log_rmse: log_rmse(sse, 2 * obs.len()),
        r_m: res.r_m,
        r_p: res.r_p,
    })
}

/// Settings shared by both robustness protocols.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustOptions {
    pub fit: FitOptions,
    /// Also start every refit from this vector (typically the full-sample
    /// estimate). Off by default so each refit is independent.
    #[serde(skip)]
    pub warm_start: Option<ThetaVector>,
}

impl RobustOptions {
    fn fit_options(&self) -> FitOptions {
        let mut fo = self.fit.clone();
        fo.extra_starts.extend(self.warm_start.iter().cloned());
        fo
    }
}

/// Smallest window length, in years, that can carry `spec`.
pub fn min_window_years(spec: &ModelSpec) -> usize {
    // years >= k/2 + 1
    (spec.n_params() + 2).div_ceil(2)
}

fn check_window(spec: &ModelSpec, start: i32, end: i32) -> Result<()> {
    let years = (end - start + 1).max(0) as usize;
    let needed = min_window_years(spec);
    if years < needed {
        return Err(Error::WindowTooShort {
            spec: spec.to_string(),
            start,
            end,
            years,
            needed,
        });
    }
    Ok(())
}

/// One refit on a window starting at `start_year`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub start_year: i32,
    pub end_year: i32,
    pub converged: bool,
    pub k: usize,
    pub sse: f64,
    /// `sqrt(SSE / (2 * window years))`.
    pub pooled_log_rmse: f64,
    pub fit: FitResult,
}

/// Refit `spec` on `start..=t_max` for every start year.
///
/// Each window is a fresh problem: rescaled time spans ±1 over the window
/// and stocks are re-anchored at its first year.
pub fn truncation_study(
    obs: &ObservedSeries,
    spec: &ModelSpec,
    start_years: &[i32],
    opts: &RobustOptions,
) -> Result<Vec<TruncationRow>> {
    let grid = obs.grid();
    for &start in start_years {
        if !grid.contains(start) {
            return Err(Error::YearOutOfRange {
                year: start,
                t_min: grid.t_min(),
                t_max: grid.t_max(),
                reason: "truncation start outside the data",
            });
        }
        check_window(spec, start, grid.t_max())?;
    }
    let fo = opts.fit_options();
    start_years
        .par_iter()
        .map(|&start| {
            let window = obs.window(start, grid.t_max())?;
            let fit = fit_spec(&window, spec, &fo)?;
            Ok(TruncationRow {
                start_year: start,
                end_year: grid.t_max(),
                converged: fit.converged,
                k: spec.n_params(),
                sse: fit.sse,
                pooled_log_rmse: log_rmse(fit.sse, 2 * window.len()),
                fit,
            })
        })
        .collect()
}

/// One-step-ahead prediction from a fit through `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HindcastPrediction {
    pub cutoff: i32,
    pub target_year: i32,
    pub converged: bool,
    pub sse: f64,
    pub observed_m: f64,
    pub predicted_m: f64,
    pub error_m: f64,
    pub observed_p: f64,
    pub predicted_p: f64,
    pub error_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HindcastRecord {
    pub predictions: Vec<HindcastPrediction>,
    pub rmse_m: f64,
    pub rmse_p: f64,
    pub rmse_pooled: f64,
}

impl HindcastRecord {
    fn from_predictions(predictions: Vec<HindcastPrediction>) -> Self {
        let j = predictions.len() as f64;
        let ss_m: f64 = predictions.iter().map(|p| p.error_m * p.error_m).sum();
        let ss_p: f64 = predictions.iter().map(|p| p.error_p * p.error_p).sum();
        Self {
            rmse_m: (ss_m / j).sqrt(),
            rmse_p: (ss_p / j).sqrt(),
            rmse_pooled: ((ss_m + ss_p) / (2.0 * j)).sqrt(),
            predictions,
        }
    }
}

/// Predict year `cutoff + 1` from a fit on `window` (which ends at the cutoff).
///
/// Stocks are propagated one step with data through the cutoff; the hazards
/// at the target year come from the window's polynomials extrapolated past
/// `s = 1`.
pub fn predict_next(window: &ObservedSeries, spec: &ModelSpec, theta: &ThetaVector) -> Result<(f64, f64)> {
    let (_, sim, _) = fitted_state(theta, spec, window)?;
    let target = window.grid().t_max() + 1;
    let point = ParamPoint::at(theta, spec, window.grid(), target)?;
    let ((m_flow, p_flow), _) = step(sim.next_stocks, &point, 0.0, 0.0);
    Ok((m_flow, p_flow))
}

/// Refit on `t_min..=T` for every cutoff `T` and score the prediction of
/// year `T + 1`. Refits see only a truncated copy of the data.
pub fn rolling_origin_hindcast(
    obs: &ObservedSeries,
    spec: &ModelSpec,
    cutoffs: &[i32],
    opts: &RobustOptions,
) -> Result<HindcastRecord> {
    let grid = obs.grid();
    if cutoffs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one hindcast cutoff is required".into(),
        ));
    }
    for &t in cutoffs {
        if !(t > grid.t_min() && t < grid.t_max()) {
            return Err(Error::YearOutOfRange {
                year: t,
                t_min: grid.t_min(),
                t_max: grid.t_max(),
                reason: "hindcast cutoff must satisfy t_min < T < t_max",
            });
        }
        check_window(spec, grid.t_min(), t)?;
    }
    let fo = opts.fit_options();
    let predictions = cutoffs
        .par_iter()
        .map(|&cutoff| {
            let window = obs.window(grid.t_min(), cutoff)?;
            let fit = fit_spec(&window, spec, &fo)?;
            let (pm, pp) = predict_next(&window, spec, &fit.theta_hat)?;
            let idx = (cutoff + 1 - grid.t_min()) as usize;
            let (om, op) = (obs.masters()[idx], obs.phd()[idx]);
            Ok(HindcastPrediction {
                cutoff,
                target_year: cutoff + 1,
                converged: fit.converged,
                sse: fit.sse,
                observed_m: om,
                predicted_m: pm,
                error_m: om.ln() - pm.ln(),
                observed_p: op,
                predicted_p: pp,
                error_p: op.ln() - pp.ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HindcastRecord::from_predictions(predictions))
}

/// How rescaled time is defined for refits on sub-windows.
pub const WINDOW_RESCALING: &str = "window";

/// Output of both robustness protocols.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub spec: ModelSpec,
    /// `window`: s(t) spans ±1 over each refit's own window.
    pub rescaling: &'static str,
    pub truncation_rows: Vec<TruncationRow>,
    pub hindcast: HindcastRecord,
}

pub fn robustness(
    obs: &ObservedSeries,
    spec: &ModelSpec,
    start_years: &[i32],
    cutoffs: &[i32],
    opts: &RobustOptions,
) -> Result<RobustnessReport> {
    Ok(RobustnessReport {
        spec: *spec,
        rescaling: WINDOW_RESCALING,
        truncation_rows: truncation_study(obs, spec, start_years, opts)?,
        hindcast: rolling_origin_hindcast(obs, spec, cutoffs, opts)?,
    })
}
