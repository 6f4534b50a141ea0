use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous annual grid `t_min..=t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearGrid {
    t_min: i32,
    t_max: i32,
}

impl YearGrid {
    pub fn new(t_min: i32, t_max: i32) -> Result<Self> {
        if t_max <= t_min {
            return Err(Error::InvalidGrid { t_min, t_max });
        }
        Ok(Self { t_min, t_max })
    }

    pub fn t_min(&self) -> i32 {
        self.t_min
    }

    pub fn t_max(&self) -> i32 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    /// Always false; a valid grid spans at least two years.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exact real midpoint, not rounded for even-length windows.
    pub fn t_mid(&self) -> f64 {
        (f64::from(self.t_min) + f64::from(self.t_max)) / 2.0
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.t_min..=self.t_max
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.t_min..=self.t_max).contains(&year)
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        self.contains(year).then(|| (year - self.t_min) as usize)
    }

    /// Affine map sending `t_min` to -1 and `t_max` to +1.
    ///
    /// Defined for any year; values outside the grid extrapolate past ±1.
    pub fn rescale(&self, year: i32) -> f64 {
        let half_span = f64::from(self.t_max - self.t_min) / 2.0;
        (f64::from(year) - self.t_mid()) / half_span
    }
}

/// Rescaled time index `s(t)` of `year` relative to `grid`.
pub fn rescale_time(year: i32, grid: &YearGrid) -> f64 {
    grid.rescale(year)
}
