use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::effective_count;
use crate::error::{Error, Result};
use crate::model::{eval_param_trajectories, ModelSpec, ThetaVector, Trajectory, YearGrid};

/// Condition number above which the eigenvalue floor is applied.
pub const MAX_CONDITION: f64 = 1e12;
/// Eigenvalue floor, relative to the largest eigenvalue.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Curvature-based parameter uncertainty at an optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyResult {
    pub hessian: DMatrix<f64>,
    pub sigma2_hat: f64,
    pub covariance: DMatrix<f64>,
    pub regularization_applied: bool,
    pub n_eff: usize,
    pub k: usize,
}

impl UncertaintyResult {
    /// Marginal standard deviations.
    pub fn std_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// `SSE / (N_eff - k)`.
pub fn residual_variance(sse: f64, n_eff: usize, k: usize) -> Result<f64> {
    if n_eff <= k {
        return Err(Error::DegreesOfFreedom { n_eff, k });
    }
    Ok(sse / (n_eff - k) as f64)
}

/// `Sigma = 2 sigma2 H^-1` with `sigma2 = SSE / (N_eff - k)` and
/// `N_eff = 2 * years - 2`.
///
/// If `H` is not positive definite or its condition number exceeds
/// [`MAX_CONDITION`], eigenvalues are floored at `EIGEN_FLOOR * max` before
/// inversion, which keeps the covariance positive semidefinite.
pub fn covariance(hessian: &DMatrix<f64>, sse: f64, spec: &ModelSpec, grid: &YearGrid) -> Result<UncertaintyResult> {
    let k = spec.n_params();
    if hessian.nrows() != k || hessian.ncols() != k {
        return Err(Error::InvalidArgument(format!(
            "Hessian is {}x{}, specification {spec} has k = {k}",
            hessian.nrows(),
            hessian.ncols()
        )));
    }
    let n_eff = effective_count(grid);
    let sigma2_hat = residual_variance(sse, n_eff, k)?;
    let (inverse, regularization_applied) = safe_inverse(hessian)?;
    let mut cov = inverse * (2.0 * sigma2_hat);
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(UncertaintyResult {
        hessian: hessian.clone(),
        sigma2_hat,
        covariance: cov,
        regularization_applied,
        n_eff,
        k,
    })
}

fn safe_inverse(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !max.is_finite() || !min.is_finite() {
        return Err(Error::Numerical("Hessian eigenvalues are not finite".into()));
    }
    let well_conditioned = min > 0.0 && max / min <= MAX_CONDITION;
    if well_conditioned {
        if let Some(chol) = sym.clone().cholesky() {
            return Ok((chol.inverse(), false));
        }
    }
    let floor = if max > 0.0 { EIGEN_FLOOR * max } else { EIGEN_FLOOR };
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    let v = &eig.eigenvectors;
    Ok((v * DMatrix::from_diagonal(&inv_vals) * v.transpose(), true))
}

/// Seeded draws from `N(theta_hat, Sigma)` using `Sigma = L L^T` with
/// `L = V sqrt(max(Lambda, 0))`, which tolerates singular covariances.
pub fn sample_parameters(
    uncertainty: &UncertaintyResult,
    theta_hat: &ThetaVector,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<ThetaVector>> {
    sample_gaussian(&uncertainty.covariance, theta_hat.as_slice(), n_draws, seed)
        .map(|d| d.into_iter().map(ThetaVector::new).collect())
}

/// Multivariate normal draws, one row per draw.
pub fn sample_gaussian(cov: &DMatrix<f64>, mean: &[f64], n_draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let k = mean.len();
    if cov.nrows() != k || cov.ncols() != k {
        return Err(Error::InvalidArgument("covariance and mean sizes differ".into()));
    }
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    let center = DVector::from_column_slice(mean);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_draws)
        .map(|_| {
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            (&center + &factor * z).as_slice().to_vec()
        })
        .collect())
}

/// Pointwise percentile band for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub trajectory: Trajectory,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Percentile bands for all five trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBands {
    pub grid: YearGrid,
    pub level: f64,
    pub n_draws: usize,
    pub bands: Vec<Band>,
}

impl ConfidenceBands {
    pub fn get(&self, t: Trajectory) -> &Band {
        self.bands
            .iter()
            .find(|b| b.trajectory == t)
            .expect("every trajectory has a band")
    }
}

/// Recompute the trajectories for every draw and take the
/// `(1 - level)/2` and `(1 + level)/2` empirical quantiles per year.
pub fn confidence_bands(
    draws: &[ThetaVector],
    spec: &ModelSpec,
    grid: &YearGrid,
    level: f64,
) -> Result<ConfidenceBands> {
    if draws.len() < 2 {
        return Err(Error::InvalidArgument("bands need at least two draws".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} is outside (0, 1)")));
    }
    let trajs = draws
        .par_iter()
        .map(|d| eval_param_trajectories(d, spec, grid))
        .collect::<Result<Vec<_>>>()?;
    let lo_q = (1.0 - level) / 2.0;
    let hi_q = (1.0 + level) / 2.0;
    let bands = Trajectory::ALL
        .iter()
        .map(|&t| {
            let mut lower = Vec::with_capacity(grid.len());
            let mut upper = Vec::with_capacity(grid.len());
            let mut column = vec![0.0; trajs.len()];
            for i in 0..grid.len() {
                for (c, tr) in column.iter_mut().zip(&trajs) {
                    *c = tr.get(t)[i];
                }
                column.sort_by(f64::total_cmp);
                lower.push(quantile_sorted(&column, lo_q));
                upper.push(quantile_sorted(&column, hi_q));
            }
            Band {
                trajectory: t,
                lower,
                upper,
            }
        })
        .collect();
    Ok(ConfidenceBands {
        grid: *grid,
        level,
        n_draws: draws.len(),
        bands,
    })
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
