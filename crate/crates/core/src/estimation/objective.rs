use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    advance, forcing_series, step, InitialStocks, ModelSpec, ObservedSeries, ParamPoint, SimulationResult, ThetaVector,
    YearGrid,
};

/// Penalty added per grid year whose implied flow is not strictly positive.
pub const INVALID_YEAR_PENALTY: f64 = 1e6;

/// A scalar function of a real vector. The optimizer, finite-difference
/// derivatives and curvature code only see this trait, so analytic test
/// functions can stand in for the model loss.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Log-scale residuals `log observed - log implied` for both series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSet {
    pub grid: YearGrid,
    pub r_m: Vec<f64>,
    pub r_p: Vec<f64>,
    /// Informative residual count; the anchored first year contributes none.
    pub n_eff: usize,
}

impl ResidualSet {
    pub fn sse(&self) -> f64 {
        self.r_m.iter().chain(&self.r_p).map(|r| r * r).sum()
    }
}

/// `2 * years - 2`.
pub fn effective_count(grid: &YearGrid) -> usize {
    2 * grid.len() - 2
}

/// Residuals of a simulation against the observations it was run on.
pub fn residuals(obs: &ObservedSeries, sim: &SimulationResult) -> Result<ResidualSet> {
    if sim.grid != *obs.grid() {
        return Err(Error::LengthMismatch {
            name: "simulation",
            expected: obs.len(),
            got: sim.grid.len(),
        });
    }
    let log_ratio = |name: &'static str, observed: &[f64], implied: &[f64]| -> Result<Vec<f64>> {
        observed
            .iter()
            .zip(implied)
            .zip(obs.grid().years())
            .map(|((&y, &yhat), year)| {
                if yhat > 0.0 && yhat.is_finite() {
                    Ok(y.ln() - yhat.ln())
                } else {
                    Err(Error::InvalidValue {
                        name,
                        year,
                        value: yhat,
                        reason: "implied flow must be strictly positive",
                    })
                }
            })
            .collect()
    };
    Ok(ResidualSet {
        grid: *obs.grid(),
        r_m: log_ratio("implied masters", obs.masters(), &sim.flow_m)?,
        r_p: log_ratio("implied phd", obs.phd(), &sim.flow_p)?,
        n_eff: effective_count(obs.grid()),
    })
}

/// Sum of squared log residuals as a function of the parameter vector.
///
/// Total over all finite inputs: a year with a non-positive or non-finite
/// implied flow ends the residual sum and every such year adds
/// [`INVALID_YEAR_PENALTY`].
#[derive(Debug, Clone)]
pub struct SseObjective<'a> {
    spec: ModelSpec,
    obs: &'a ObservedSeries,
    log_m: Vec<f64>,
    log_p: Vec<f64>,
    s: Vec<f64>,
}

impl<'a> SseObjective<'a> {
    pub fn new(spec: ModelSpec, obs: &'a ObservedSeries) -> Result<Self> {
        forcing_series(obs, &spec)?;
        let grid = obs.grid();
        Ok(Self {
            spec,
            obs,
            log_m: obs.masters().iter().map(|v| v.ln()).collect(),
            log_p: obs.phd().iter().map(|v| v.ln()).collect(),
            s: grid.years().map(|y| grid.rescale(y)).collect(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn obs(&self) -> &ObservedSeries {
        self.obs
    }

    fn sse(&self, x: &[f64]) -> f64 {
        let n = self.obs.len();
        if x.iter().any(|v| !v.is_finite()) {
            return INVALID_YEAR_PENALTY * n as f64;
        }
        let theta = ThetaVector::new(x.to_vec());
        let spec = &self.spec;
        let coeffs = [
            theta.rho_block(spec, 0),
            theta.rho_block(spec, 1),
            theta.rho_block(spec, 2),
            theta.gamma_block(spec, 0),
            theta.gamma_block(spec, 1),
        ];
        let lambda = theta.lambda(spec);
        let point_at = |i: usize| {
            let v =
                coeffs.map(|c| crate::model::clamped_inv_logit(crate::model::trajectories_polynomial(c, self.s[i])));
            ParamPoint {
                rho_bm: v[0],
                rho_bp: v[1],
                rho_mp: v[2],
                gamma_m: v[3],
                gamma_p: v[4],
                lambda,
            }
        };
        let first = point_at(0);
        let init = InitialStocks {
            m0: self.obs.masters()[0] / first.gamma_m,
            p0: self.obs.phd()[0] / first.gamma_p,
        };
        let b = self.obs.bachelors();
        let intl = self.obs.phd_intl().filter(|_| spec.forcing());
        let mut stocks = (init.m0, init.p0);
        let mut sse = 0.0;
        for i in 0..n {
            let point = if i == 0 { first } else { point_at(i) };
            let p_intl = intl.map_or(0.0, |f| f[i]);
            let (flows, next) = if i == 0 {
                // anchored year: implied flows are the observations
                let flows = (self.obs.masters()[0], self.obs.phd()[0]);
                (flows, advance(stocks, flows, &point, b[0], p_intl))
            } else {
                step(stocks, &point, b[i], p_intl)
            };
            let valid = flows.0 > 0.0 && flows.1 > 0.0 && flows.0.is_finite() && flows.1.is_finite();
            if !valid {
                return sse + INVALID_YEAR_PENALTY * (n - i) as f64;
            }
            let rm = self.log_m[i] - flows.0.ln();
            let rp = self.log_p[i] - flows.1.ln();
            sse += rm * rm + rp * rp;
            stocks = next;
        }
        sse
    }
}

impl Objective for SseObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.sse(x)
    }
}

/// `SSE(theta)` for `spec` on `obs`.
pub fn loss(theta: &ThetaVector, spec: &ModelSpec, obs: &ObservedSeries) -> Result<f64> {
    theta.check(spec)?;
    Ok(SseObjective::new(*spec, obs)?.value(theta.as_slice()))
}

/// Simulation and residuals at `theta`, the full fitted state of a model.
pub fn fitted_state(
    theta: &ThetaVector,
    spec: &ModelSpec,
    obs: &ObservedSeries,
) -> Result<(crate::model::ParamTrajectories, SimulationResult, ResidualSet)> {
    let traj = crate::model::eval_param_trajectories(theta, spec, obs.grid())?;
    let sim = crate::model::simulate(obs, &traj, spec)?;
    let res = residuals(obs, &sim)?;
    Ok((traj, sim, res))
}
