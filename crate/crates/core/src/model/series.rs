use serde::{Deserialize, Serialize};

use super::YearGrid;
use crate::error::{Error, Result};

/// Annual completion counts on a contiguous grid.
///
/// `b` is bachelor's, `m` master's, `p` PhD completions; `p_intl` is the
/// optional forcing proxy. Master's and PhD counts must be strictly positive
/// so their logarithms exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    grid: YearGrid,
    b: Vec<f64>,
    m: Vec<f64>,
    p: Vec<f64>,
    p_intl: Option<Vec<f64>>,
}

impl ObservedSeries {
    pub fn new(grid: YearGrid, b: Vec<f64>, m: Vec<f64>, p: Vec<f64>, p_intl: Option<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        check_len("bachelors", n, &b)?;
        check_len("masters", n, &m)?;
        check_len("phd", n, &p)?;
        if let Some(x) = &p_intl {
            check_len("phd_intl", n, x)?;
        }
        for (i, year) in grid.years().enumerate() {
            check_value("bachelors", year, b[i], false)?;
            check_value("masters", year, m[i], true)?;
            check_value("phd", year, p[i], true)?;
            if let Some(x) = &p_intl {
                check_value("phd_intl", year, x[i], false)?;
            }
        }
        Ok(Self { grid, b, m, p, p_intl })
    }

    pub fn grid(&self) -> &YearGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bachelors(&self) -> &[f64] {
        &self.b
    }

    pub fn masters(&self) -> &[f64] {
        &self.m
    }

    pub fn phd(&self) -> &[f64] {
        &self.p
    }

    pub fn phd_intl(&self) -> Option<&[f64]> {
        self.p_intl.as_deref()
    }

    pub fn has_forcing(&self) -> bool {
        self.p_intl.is_some()
    }

    /// Copy restricted to `start..=end`, which must lie inside the grid.
    pub fn window(&self, start: i32, end: i32) -> Result<Self> {
        let g = &self.grid;
        for year in [start, end] {
            if !g.contains(year) {
                return Err(Error::YearOutOfRange {
                    year,
                    t_min: g.t_min(),
                    t_max: g.t_max(),
                    reason: "window endpoint outside the data",
                });
            }
        }
        let grid = YearGrid::new(start, end)?;
        let lo = (start - g.t_min()) as usize;
        let hi = (end - g.t_min()) as usize + 1;
        Ok(Self {
            grid,
            b: self.b[lo..hi].to_vec(),
            m: self.m[lo..hi].to_vec(),
            p: self.p[lo..hi].to_vec(),
            p_intl: self.p_intl.as_ref().map(|x| x[lo..hi].to_vec()),
        })
    }

    /// Same counts without the forcing proxy.
    pub fn without_forcing(&self) -> Self {
        Self {
            p_intl: None,
            ..self.clone()
        }
    }
}

fn check_len(name: &'static str, expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::LengthMismatch {
            name,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

fn check_value(name: &'static str, year: i32, value: f64, strictly_positive: bool) -> Result<()> {
    let reason = if !value.is_finite() {
        "not finite"
    } else if strictly_positive && value <= 0.0 {
        "must be strictly positive"
    } else if value < 0.0 {
        "must be nonnegative"
    } else {
        return Ok(());
    };
    Err(Error::InvalidValue {
        name,
        year,
        value,
        reason,
    })
}
