use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
///
/// Data and configuration problems are separated from numerical failures so
/// the command-line layer can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid year grid: t_max ({t_max}) must exceed t_min ({t_min})")]
    InvalidGrid { t_min: i32, t_max: i32 },

    #[error("series `{name}` has {got} entries, grid has {expected}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("series `{name}` has invalid value {value} in year {year}: {reason}")]
    InvalidValue {
        name: &'static str,
        year: i32,
        value: f64,
        reason: &'static str,
    },

    #[error("degree {0} is outside {{0, 1, 2}}")]
    InvalidDegree(u8),

    #[error("parameter vector has length {got}, specification {spec} needs {expected}")]
    ThetaLength { spec: String, expected: usize, got: usize },

    #[error("specification {0} uses forcing but the series has no phd_intl column")]
    MissingForcing(String),

    #[error("cannot parse specification `{0}` (expected deg_gamma,deg_rho,none|forcing)")]
    SpecSyntax(String),

    #[error("window {start}..={end} has {years} years, specification {spec} needs at least {needed}")]
    WindowTooShort {
        spec: String,
        start: i32,
        end: i32,
        years: usize,
        needed: usize,
    },

    #[error("year {year} is outside {t_min}..={t_max}: {reason}")]
    YearOutOfRange {
        year: i32,
        t_min: i32,
        t_max: i32,
        reason: &'static str,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite Hessian entry at ({row}, {col})")]
    NonFiniteHessian { row: usize, col: usize },

    #[error("residual variance undefined: N_eff = {n_eff} does not exceed k = {k}")]
    DegreesOfFreedom { n_eff: usize, k: usize },

    #[error("information criteria undefined for SSE = {0}")]
    UndefinedCriterion(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteHessian { .. }
                | Error::DegreesOfFreedom { .. }
                | Error::UndefinedCriterion(_)
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
