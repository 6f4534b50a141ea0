//! The latent two-compartment stock-flow system.
//!
//! A master's stock `M` and a PhD stock `P` are fed by bachelor's completions
//! and drained by completion hazards. Only the exit flows are observed; the
//! stocks are reconstructed by forward simulation from an anchored first year.

mod grid;
mod series;
mod simulate;
mod spec;
mod trajectories;
mod transform;

pub use grid::{rescale_time, YearGrid};
pub use series::ObservedSeries;
pub use simulate::{initialize_stocks, simulate, simulate_from, step, InitialStocks, SimulationResult};
pub use spec::{ModelSpec, ThetaVector, LAMBDA_RAW_FLOOR};
pub use trajectories::{eval_param_trajectories, ParamPoint, ParamTrajectories, Trajectory};
pub use transform::{clamped_inv_logit, inv_logit, logit, PROB_CLAMP};

pub(crate) use simulate::{advance, forcing_series};
pub(crate) use trajectories::polynomial as trajectories_polynomial;
