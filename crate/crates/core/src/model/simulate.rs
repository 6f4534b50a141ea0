use serde::{Deserialize, Serialize};

use super::{ModelSpec, ObservedSeries, ParamPoint, ParamTrajectories, YearGrid};
use crate::error::{Error, Result};

/// Latent stocks at the first grid year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStocks {
    pub m0: f64,
    pub p0: f64,
}

/// Latent stocks and implied completion flows over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub grid: YearGrid,
    pub stock_m: Vec<f64>,
    pub stock_p: Vec<f64>,
    pub flow_m: Vec<f64>,
    pub flow_p: Vec<f64>,
    /// Stocks one year past `t_max`, propagated with data through `t_max` only.
    pub next_stocks: (f64, f64),
}

/// Anchor the first-year stocks so implied first-year flows equal the
/// observed ones: `M = m / gamma_M`, `P = p / gamma_P`.
pub fn initialize_stocks(obs: &ObservedSeries, traj: &ParamTrajectories) -> Result<InitialStocks> {
    let first = traj.point(0);
    let year = obs.grid().t_min();
    let m = obs.masters()[0];
    let p = obs.phd()[0];
    if !(m > 0.0) {
        return Err(Error::InvalidValue {
            name: "masters",
            year,
            value: m,
            reason: "first-year count must be strictly positive",
        });
    }
    if !(p > 0.0) {
        return Err(Error::InvalidValue {
            name: "phd",
            year,
            value: p,
            reason: "first-year count must be strictly positive",
        });
    }
    Ok(InitialStocks {
        m0: m / first.gamma_m,
        p0: p / first.gamma_p,
    })
}

/// One annual update. Returns the implied flows at the current year and the
/// stocks at the next year.
#[inline]
pub fn step(stocks: (f64, f64), point: &ParamPoint, b: f64, p_intl: f64) -> ((f64, f64), (f64, f64)) {
    let flows = (point.gamma_m * stocks.0, point.gamma_p * stocks.1);
    (flows, advance(stocks, flows, point, b, p_intl))
}

/// Stocks at the next year given this year's stocks and outflows.
#[inline]
pub(crate) fn advance(stocks: (f64, f64), flows: (f64, f64), point: &ParamPoint, b: f64, p_intl: f64) -> (f64, f64) {
    let (m_stock, p_stock) = stocks;
    let (m_flow, p_flow) = flows;
    (
        m_stock + point.rho_bm * b - m_flow,
        p_stock + point.rho_bp * b + point.rho_mp * m_flow - p_flow + point.lambda * p_intl,
    )
}

/// Run the recurrences from the anchored initial stocks.
///
/// First-year implied flows are the observed ones, so both first-year
/// residuals are exactly zero; `gamma * stock` reproduces them up to one
/// rounding.
pub fn simulate(obs: &ObservedSeries, traj: &ParamTrajectories, spec: &ModelSpec) -> Result<SimulationResult> {
    check_inputs(obs, traj, spec)?;
    let init = initialize_stocks(obs, traj)?;
    run(obs, traj, spec, init, true)
}

/// Run the recurrences from arbitrary initial stocks.
pub fn simulate_from(
    obs: &ObservedSeries,
    traj: &ParamTrajectories,
    spec: &ModelSpec,
    init: InitialStocks,
) -> Result<SimulationResult> {
    check_inputs(obs, traj, spec)?;
    run(obs, traj, spec, init, false)
}

fn run(
    obs: &ObservedSeries,
    traj: &ParamTrajectories,
    spec: &ModelSpec,
    init: InitialStocks,
    anchored: bool,
) -> Result<SimulationResult> {
    let n = obs.len();
    let forcing = forcing_series(obs, spec)?;
    let mut out = SimulationResult {
        grid: *obs.grid(),
        stock_m: Vec::with_capacity(n),
        stock_p: Vec::with_capacity(n),
        flow_m: Vec::with_capacity(n),
        flow_p: Vec::with_capacity(n),
        next_stocks: (0.0, 0.0),
    };
    let mut stocks = (init.m0, init.p0);
    for i in 0..n {
        let mut point = traj.point(i);
        if !spec.forcing() {
            point.lambda = 0.0;
        }
        let intl = forcing.map_or(0.0, |f| f[i]);
        let b = obs.bachelors()[i];
        let (flows, next) = if anchored && i == 0 {
            let flows = (obs.masters()[0], obs.phd()[0]);
            (flows, advance(stocks, flows, &point, b, intl))
        } else {
            step(stocks, &point, b, intl)
        };
        out.stock_m.push(stocks.0);
        out.stock_p.push(stocks.1);
        out.flow_m.push(flows.0);
        out.flow_p.push(flows.1);
        stocks = next;
    }
    out.next_stocks = stocks;
    Ok(out)
}

/// The forcing column when the specification needs one.
pub(crate) fn forcing_series<'a>(obs: &'a ObservedSeries, spec: &ModelSpec) -> Result<Option<&'a [f64]>> {
    if !spec.forcing() {
        return Ok(None);
    }
    obs.phd_intl()
        .map(Some)
        .ok_or_else(|| Error::MissingForcing(spec.to_string()))
}

fn check_inputs(obs: &ObservedSeries, traj: &ParamTrajectories, spec: &ModelSpec) -> Result<()> {
    if traj.grid() != obs.grid() {
        return Err(Error::LengthMismatch {
            name: "trajectories",
            expected: obs.len(),
            got: traj.grid().len(),
        });
    }
    forcing_series(obs, spec).map(|_| ())
}
