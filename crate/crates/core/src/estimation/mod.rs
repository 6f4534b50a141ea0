//! Log-scale least squares, quasi-Newton minimization and curvature-based
//! uncertainty.

mod bfgs;
mod derivatives;
mod objective;
mod starts;
mod uncertainty;

pub use bfgs::{minimize, minimize_bfgs, BfgsOptions, FitResult, LocalMinimum, StartSummary, Termination};
pub use derivatives::{gradient_fd, numerical_hessian, GRADIENT_STEP, HESSIAN_STEP};
pub use objective::{
    effective_count, fitted_state, loss, residuals, FnObjective, Objective, ResidualSet, SseObjective,
    INVALID_YEAR_PENALTY,
};
pub use starts::{default_starts, heuristic_center, START_SPREAD};
pub use uncertainty::{
    confidence_bands, covariance, quantile_sorted, residual_variance, sample_gaussian, sample_parameters, Band,
    ConfidenceBands, UncertaintyResult, EIGEN_FLOOR, MAX_CONDITION,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ModelSpec, ObservedSeries, ThetaVector};

/// Multi-start settings shared by every fitting entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub bfgs: BfgsOptions,
    /// Additional starts tried after the default ones.
    #[serde(skip)]
    pub extra_starts: Vec<ThetaVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            seed: 0,
            bfgs: BfgsOptions::default(),
            extra_starts: Vec::new(),
        }
    }
}

impl FitOptions {
    pub fn starts_for(&self, spec: &ModelSpec, seed: u64) -> Vec<ThetaVector> {
        let mut starts = default_starts(spec, self.n_starts, seed);
        starts.extend(self.extra_starts.iter().filter(|s| s.len() == spec.n_params()).cloned());
        starts
    }
}

/// Fit one specification from the default multi-start set.
pub fn fit_spec(obs: &ObservedSeries, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    minimize_bfgs(spec, obs, &opts.starts_for(spec, opts.seed), &opts.bfgs)
}

/// Finite-difference Hessian of the loss at `fit.theta_hat` and the implied
/// parameter covariance.
pub fn fit_uncertainty(obs: &ObservedSeries, fit: &FitResult) -> Result<UncertaintyResult> {
    let obj = SseObjective::new(fit.spec, obs)?;
    let hessian = numerical_hessian(&obj, fit.theta_hat.as_slice())?;
    covariance(&hessian, fit.sse, &fit.spec, obs.grid())
}
