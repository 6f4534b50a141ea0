//! Information-criterion comparison over the degree-by-degree-by-forcing
//! specification grid.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{effective_count, fit_spec, FitOptions, FitResult};
use crate::model::{ModelSpec, ObservedSeries};

/// Relative SSE excess of a forcing fit over its nested non-forcing fit
/// above which the forcing fit is flagged as a local optimum.
pub const NESTING_TOLERANCE: f64 = 1e-6;

/// `AIC = 2k + N log(SSE/N)`, `BIC = k log N + N log(SSE/N)`.
pub fn information_criteria(sse: f64, k: usize, n: usize) -> Result<(f64, f64)> {
    if !(sse > 0.0) || !sse.is_finite() {
        return Err(Error::UndefinedCriterion(sse));
    }
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "criteria need n > 0 and k > 0 (n = {n}, k = {k})"
        )));
    }
    let (k, n) = (k as f64, n as f64);
    let fit = n * (sse / n).ln();
    Ok((2.0 * k + fit, k * n.ln() + fit))
}

/// Which residual count enters the criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    /// `2 * years`, every residual including the anchored first year.
    #[default]
    Observations,
    /// `2 * years - 2`.
    Effective,
}

impl SampleSize {
    pub fn count(&self, obs: &ObservedSeries) -> usize {
        match self {
            SampleSize::Observations => 2 * obs.len(),
            SampleSize::Effective => effective_count(obs.grid()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GridOptions {
    pub fit: FitOptions,
    pub sample_size: SampleSize,
}

/// One fitted specification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    pub spec: ModelSpec,
    pub k: usize,
    pub n: usize,
    pub fit: Option<FitResult>,
    pub aic: f64,
    pub bic: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
    /// Why this entry could not be scored; it is then excluded from ranking.
    pub failure: Option<String>,
    pub warnings: Vec<String>,
}

impl GridEntry {
    pub fn is_scored(&self) -> bool {
        self.failure.is_none()
    }

    pub fn sse(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.sse)
    }

    pub fn criterion(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

/// A specification that was not fitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSpec {
    pub spec: ModelSpec,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    /// Sorted by AIC, then BIC, then k, then canonical spec order; unscored
    /// entries last.
    pub entries: Vec<GridEntry>,
    pub skipped: Vec<SkippedSpec>,
    pub n: usize,
    pub sample_size: SampleSize,
}

/// Fit every specification of the grid and rank by AIC.
///
/// Forcing specifications are skipped, with a recorded reason, when the
/// series has no forcing proxy. Each specification draws its starts from
/// `seed + spec.index()`.
pub fn run_grid(obs: &ObservedSeries, opts: &GridOptions) -> GridReport {
    let n = opts.sample_size.count(obs);
    let (fitted, skipped): (Vec<ModelSpec>, Vec<ModelSpec>) = ModelSpec::all()
        .into_iter()
        .partition(|s| !s.forcing() || obs.has_forcing());
    let skipped = skipped
        .into_iter()
        .map(|spec| SkippedSpec {
            spec,
            reason: "series has no phd_intl column".into(),
        })
        .collect();
    let mut entries: Vec<GridEntry> = fitted
        .par_iter()
        .map(|spec| {
            let mut fo = opts.fit.clone();
            fo.seed = opts.fit.seed.wrapping_add(spec.index() as u64);
            score(*spec, fit_spec(obs, spec, &fo), n)
        })
        .collect();
    flag_nesting(&mut entries);
    rank(&mut entries);
    GridReport {
        entries,
        skipped,
        n,
        sample_size: opts.sample_size,
    }
}

fn score(spec: ModelSpec, fit: Result<FitResult>, n: usize) -> GridEntry {
    let k = spec.n_params();
    let mut entry = GridEntry {
        spec,
        k,
        n,
        fit: None,
        aic: f64::INFINITY,
        bic: f64::INFINITY,
        delta_aic: f64::INFINITY,
        delta_bic: f64::INFINITY,
        failure: None,
        warnings: Vec::new(),
    };
    match fit {
        Err(e) => entry.failure = Some(e.to_string()),
        Ok(fit) => {
            if let Some(reason) = &fit.failure {
                entry.failure = Some(reason.clone());
            } else {
                match information_criteria(fit.sse, k, n) {
                    Ok((aic, bic)) => {
                        entry.aic = aic;
                        entry.bic = bic;
                    }
                    Err(_) if fit.sse == 0.0 => entry.failure = Some("perfect fit: SSE = 0".into()),
                    Err(e) => entry.failure = Some(e.to_string()),
                }
                if !fit.converged {
                    entry.warnings.push(format!("not converged ({:?})", fit.termination));
                }
            }
            entry.fit = Some(fit);
        }
    }
    entry
}

fn flag_nesting(entries: &mut [GridEntry]) {
    let base: Vec<(ModelSpec, f64)> = entries
        .iter()
        .filter(|e| !e.spec.forcing())
        .filter_map(|e| e.sse().map(|s| (e.spec, s)))
        .collect();
    for e in entries.iter_mut().filter(|e| e.spec.forcing()) {
        let Some(sse) = e.sse() else { continue };
        let nested = base
            .iter()
            .find(|(s, _)| s.deg_gamma() == e.spec.deg_gamma() && s.deg_rho() == e.spec.deg_rho());
        if let Some(&(_, base_sse)) = nested {
            if sse > base_sse * (1.0 + NESTING_TOLERANCE) {
                e.warnings.push(format!(
                    "local optimum: SSE {sse:.6e} exceeds the nested no-forcing SSE {base_sse:.6e}"
                ));
            }
        }
    }
}

fn rank(entries: &mut [GridEntry]) {
    entries.sort_by(|a, b| {
        b.is_scored()
            .cmp(&a.is_scored())
            .then(a.aic.total_cmp(&b.aic))
            .then(a.bic.total_cmp(&b.bic))
            .then(a.k.cmp(&b.k))
            .then(a.spec.index().cmp(&b.spec.index()))
    });
    let best = |c: Criterion| {
        entries
            .iter()
            .filter(|e| e.is_scored())
            .map(|e| e.criterion(c))
            .fold(f64::INFINITY, f64::min)
    };
    let (best_aic, best_bic) = (best(Criterion::Aic), best(Criterion::Bic));
    for e in entries.iter_mut().filter(|e| e.is_scored()) {
        e.delta_aic = e.aic - best_aic;
        e.delta_bic = e.bic - best_bic;
    }
}

/// Lowest criterion value; ties go to smaller k, then canonical spec order.
pub fn select_best(entries: &[GridEntry], criterion: Criterion) -> Result<&GridEntry> {
    entries
        .iter()
        .filter(|e| e.is_scored())
        .min_by(|a, b| {
            a.criterion(criterion)
                .partial_cmp(&b.criterion(criterion))
                .unwrap_or(Ordering::Equal)
                .then(a.k.cmp(&b.k))
                .then(a.spec.index().cmp(&b.spec.index()))
        })
        .ok_or_else(|| Error::Numerical("no specification in the grid could be scored".into()))
}
