use serde::{Deserialize, Serialize};

use super::{clamped_inv_logit, ModelSpec, ThetaVector, YearGrid};
use crate::error::Result;

/// The five time-varying functions of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trajectory {
    RhoBM,
    RhoBP,
    RhoMP,
    GammaM,
    GammaP,
}

impl Trajectory {
    pub const ALL: [Trajectory; 5] = [
        Trajectory::RhoBM,
        Trajectory::RhoBP,
        Trajectory::RhoMP,
        Trajectory::GammaM,
        Trajectory::GammaP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Trajectory::RhoBM => "rho_BM",
            Trajectory::RhoBP => "rho_BP",
            Trajectory::RhoMP => "rho_MP",
            Trajectory::GammaM => "gamma_M",
            Trajectory::GammaP => "gamma_P",
        }
    }

    fn slot(&self) -> usize {
        *self as usize
    }

    fn coeffs<'a>(&self, theta: &'a ThetaVector, spec: &ModelSpec) -> &'a [f64] {
        match self {
            Trajectory::RhoBM => theta.rho_block(spec, 0),
            Trajectory::RhoBP => theta.rho_block(spec, 1),
            Trajectory::RhoMP => theta.rho_block(spec, 2),
            Trajectory::GammaM => theta.gamma_block(spec, 0),
            Trajectory::GammaP => theta.gamma_block(spec, 1),
        }
    }
}

/// All parameter values at a single year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub rho_bm: f64,
    pub rho_bp: f64,
    pub rho_mp: f64,
    pub gamma_m: f64,
    pub gamma_p: f64,
    pub lambda: f64,
}

impl ParamPoint {
    /// Evaluate at `year` using the rescaling of `scale`. The year may lie
    /// outside `scale`, in which case the polynomials are extrapolated.
    pub fn at(theta: &ThetaVector, spec: &ModelSpec, scale: &YearGrid, year: i32) -> Result<Self> {
        theta.check(spec)?;
        Ok(Self::eval_unchecked(theta, spec, scale.rescale(year)))
    }

    fn eval_unchecked(theta: &ThetaVector, spec: &ModelSpec, s: f64) -> Self {
        let v = |t: Trajectory| clamped_inv_logit(polynomial(t.coeffs(theta, spec), s));
        Self {
            rho_bm: v(Trajectory::RhoBM),
            rho_bp: v(Trajectory::RhoBP),
            rho_mp: v(Trajectory::RhoMP),
            gamma_m: v(Trajectory::GammaM),
            gamma_p: v(Trajectory::GammaP),
            lambda: theta.lambda(spec),
        }
    }

    pub fn get(&self, t: Trajectory) -> f64 {
        match t {
            Trajectory::RhoBM => self.rho_bm,
            Trajectory::RhoBP => self.rho_bp,
            Trajectory::RhoMP => self.rho_mp,
            Trajectory::GammaM => self.gamma_m,
            Trajectory::GammaP => self.gamma_p,
        }
    }
}

/// Per-year branching fractions and hazards over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTrajectories {
    grid: YearGrid,
    values: [Vec<f64>; 5],
    lambda: f64,
}

impl ParamTrajectories {
    /// Build directly from per-year values; every vector must span `grid`.
    pub fn from_points(grid: YearGrid, points: &[ParamPoint]) -> Self {
        assert_eq!(points.len(), grid.len(), "one point per grid year");
        let values = Trajectory::ALL.map(|t| points.iter().map(|p| p.get(t)).collect());
        let lambda = points.first().map_or(0.0, |p| p.lambda);
        Self { grid, values, lambda }
    }

    /// Constant trajectories, convenient for hand-built scenarios.
    pub fn constant(grid: YearGrid, point: ParamPoint) -> Self {
        Self::from_points(grid, &vec![point; grid.len()])
    }

    pub fn grid(&self) -> &YearGrid {
        &self.grid
    }

    pub fn get(&self, t: Trajectory) -> &[f64] {
        &self.values[t.slot()]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn point(&self, i: usize) -> ParamPoint {
        ParamPoint {
            rho_bm: self.values[0][i],
            rho_bp: self.values[1][i],
            rho_mp: self.values[2][i],
            gamma_m: self.values[3][i],
            gamma_p: self.values[4][i],
            lambda: self.lambda,
        }
    }
}

/// Evaluate every trajectory at each year of `grid`, rescaled on `grid`.
pub fn eval_param_trajectories(theta: &ThetaVector, spec: &ModelSpec, grid: &YearGrid) -> Result<ParamTrajectories> {
    theta.check(spec)?;
    let points: Vec<ParamPoint> = grid
        .years()
        .map(|y| ParamPoint::eval_unchecked(theta, spec, grid.rescale(y)))
        .collect();
    Ok(ParamTrajectories::from_points(*grid, &points))
}

/// `c[0] + c[1] s + c[2] s^2 + ...` by Horner's rule.
pub(crate) fn polynomial(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}
