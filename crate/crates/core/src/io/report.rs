//! Run reports: one JSON summary plus flat CSV tables, all byte-stable for
//! identical inputs regardless of thread count.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{OutputFormat, RunConfig};
use super::data::write_series;
use super::format::{fmt_num, write_csv, write_json};
use crate::diagnostics::{
    log_rmse, multiplicative_error, residual_report, Histogram, ResidualReport, RobustnessReport, N_BINS,
};
use crate::error::{Error, Result};
use crate::estimation::{effective_count, fitted_state, ConfidenceBands, FitResult, UncertaintyResult};
use crate::model::{eval_param_trajectories, ObservedSeries, ParamTrajectories, SimulationResult, Trajectory};
use crate::selection::{information_criteria, GridReport};
use crate::synthetic::{SyntheticData, SyntheticScenario};

/// A fit together with its simulated state and scores.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub fit: FitResult,
    pub trajectories: ParamTrajectories,
    pub simulation: SimulationResult,
    pub residuals: ResidualReport,
    /// Residual count used by the criteria.
    pub n: usize,
    pub n_eff: usize,
    /// `None` when the criteria are undefined (zero SSE).
    pub aic: Option<f64>,
    pub bic: Option<f64>,
}

impl FittedModel {
    pub fn new(obs: &ObservedSeries, fit: FitResult, n: usize) -> Result<Self> {
        let (trajectories, simulation, _) = fitted_state(&fit.theta_hat, &fit.spec, obs)?;
        let residuals = residual_report(obs, &simulation)?;
        let ic = information_criteria(fit.sse, fit.spec.n_params(), n).ok();
        Ok(Self {
            trajectories,
            simulation,
            residuals,
            n,
            n_eff: effective_count(obs.grid()),
            aic: ic.map(|c| c.0),
            bic: ic.map(|c| c.1),
            fit,
        })
    }
}

/// Everything a command produced. Absent sections are simply not written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub command: String,
    pub config: RunConfig,
    pub observed: Option<ObservedSeries>,
    pub fitted: Option<FittedModel>,
    pub uncertainty: Option<UncertaintyResult>,
    pub bands: Option<ConfidenceBands>,
    pub grid: Option<GridReport>,
    pub robustness: Option<RobustnessReport>,
    pub synthetic: Option<(SyntheticScenario, SyntheticData)>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            observed: None,
            fitted: None,
            uncertainty: None,
            bands: None,
            grid: None,
            robustness: None,
            synthetic: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// Data rows for CSV files; 1 for JSON documents.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn rows(&self, file: &str) -> Option<usize> {
        self.files.iter().find(|e| e.file == file).map(|e| e.rows)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "run_report.json";

/// Write every available section into `dir` (created if needed) and finish
/// with `manifest.json`.
pub fn write_reports(out: &RunOutput, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    if out.config.wants(OutputFormat::Csv) {
        let mut add = |name: &str, rows: usize| {
            files.push(ManifestEntry {
                file: name.into(),
                rows,
            })
        };
        if let Some(obs) = &out.observed {
            add("observed.csv", write_series(obs, &dir.join("observed.csv"))?);
        }
        if let Some((scenario, data)) = &out.synthetic {
            add("truth.csv", write_truth(scenario, data, &dir.join("truth.csv"))?);
        }
        if let (Some(obs), Some(fm)) = (&out.observed, &out.fitted) {
            add(
                "trajectories.csv",
                write_trajectories(obs, fm, out.bands.as_ref(), &dir.join("trajectories.csv"))?,
            );
            add(
                "residuals.csv",
                write_residuals(&fm.residuals, &dir.join("residuals.csv"))?,
            );
            add(
                "residual_histogram.csv",
                write_histogram(&fm.residuals, &dir.join("residual_histogram.csv"))?,
            );
            add(
                "parameters.csv",
                write_parameters(fm, out.uncertainty.as_ref(), &dir.join("parameters.csv"))?,
            );
        }
        if let (Some(fm), Some(unc)) = (&out.fitted, &out.uncertainty) {
            add(
                "covariance.csv",
                write_covariance(fm, unc, &dir.join("covariance.csv"))?,
            );
        }
        if let Some(grid) = &out.grid {
            add("grid.csv", write_grid(grid, &dir.join("grid.csv"))?);
        }
        if let Some(rob) = &out.robustness {
            add("truncation.csv", write_truncation(rob, &dir.join("truncation.csv"))?);
            add("hindcast.csv", write_hindcast(rob, &dir.join("hindcast.csv"))?);
        }
    }
    if out.config.wants(OutputFormat::Json) {
        write_json(&dir.join(REPORT_FILE), &report_json(out))?;
        files.push(ManifestEntry {
            file: REPORT_FILE.into(),
            rows: 1,
        });
    }
    files.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = Manifest { files };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

fn opt_num(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map_or_else(|| "NA".to_string(), fmt_num)
}

fn write_truth(scenario: &SyntheticScenario, data: &SyntheticData, path: &Path) -> Result<usize> {
    let grid = data.observed.grid();
    let traj = eval_param_trajectories(&scenario.theta_true, &scenario.spec, grid)?;
    let mut header = vec!["year", "stock_m", "stock_p", "flow_m", "flow_p"];
    header.extend(Trajectory::ALL.iter().map(|t| t.name()));
    let t = &data.truth;
    let rows = grid
        .years()
        .enumerate()
        .map(|(i, y)| {
            let mut r = vec![
                y.to_string(),
                fmt_num(t.stock_m[i]),
                fmt_num(t.stock_p[i]),
                fmt_num(t.flow_m[i]),
                fmt_num(t.flow_p[i]),
            ];
            r.extend(Trajectory::ALL.iter().map(|&tr| fmt_num(traj.get(tr)[i])));
            r
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}

fn write_trajectories(
    obs: &ObservedSeries,
    fm: &FittedModel,
    bands: Option<&ConfidenceBands>,
    path: &Path,
) -> Result<usize> {
    let mut header: Vec<String> = [
        "year",
        "masters_obs",
        "phd_obs",
        "masters_fit",
        "phd_fit",
        "stock_m",
        "stock_p",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for t in Trajectory::ALL {
        header.push(t.name().to_string());
        if bands.is_some() {
            header.push(format!("{}_lower", t.name()));
            header.push(format!("{}_upper", t.name()));
        }
    }
    let sim = &fm.simulation;
    let rows = obs
        .grid()
        .years()
        .enumerate()
        .map(|(i, y)| {
            let mut r = vec![
                y.to_string(),
                fmt_num(obs.masters()[i]),
                fmt_num(obs.phd()[i]),
                fmt_num(sim.flow_m[i]),
                fmt_num(sim.flow_p[i]),
                fmt_num(sim.stock_m[i]),
                fmt_num(sim.stock_p[i]),
            ];
            for t in Trajectory::ALL {
                r.push(fmt_num(fm.trajectories.get(t)[i]));
                if let Some(b) = bands {
                    let band = b.get(t);
                    r.push(fmt_num(band.lower[i]));
                    r.push(fmt_num(band.upper[i]));
                }
            }
            r
        })
        .collect::<Vec<_>>();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

fn write_residuals(res: &ResidualReport, path: &Path) -> Result<usize> {
    let rows = res
        .years
        .iter()
        .enumerate()
        .map(|(i, y)| vec![y.to_string(), fmt_num(res.r_m[i]), fmt_num(res.r_p[i])])
        .collect::<Vec<_>>();
    write_csv(path, &["year", "resid_masters", "resid_phd"], &rows)
}

fn write_histogram(res: &ResidualReport, path: &Path) -> Result<usize> {
    let (hm, hp) = (&res.masters.histogram, &res.phd.histogram);
    let mut rows = vec![vec![
        "-inf".to_string(),
        fmt_num(Histogram::lower_edge(0)),
        hm.underflow.to_string(),
        hp.underflow.to_string(),
    ]];
    for i in 0..N_BINS {
        rows.push(vec![
            fmt_num(Histogram::lower_edge(i)),
            fmt_num(Histogram::lower_edge(i + 1)),
            hm.bins[i].to_string(),
            hp.bins[i].to_string(),
        ]);
    }
    rows.push(vec![
        fmt_num(Histogram::lower_edge(N_BINS)),
        "inf".to_string(),
        hm.overflow.to_string(),
        hp.overflow.to_string(),
    ]);
    write_csv(path, &["lower", "upper", "masters", "phd"], &rows)
}

fn write_parameters(fm: &FittedModel, unc: Option<&UncertaintyResult>, path: &Path) -> Result<usize> {
    let se = unc.map(UncertaintyResult::std_errors);
    let rows = fm
        .fit
        .spec
        .labels()
        .into_iter()
        .zip(fm.fit.theta_hat.as_slice())
        .enumerate()
        .map(|(i, (name, v))| vec![name, fmt_num(*v), opt_num(se.as_ref().map(|s| s[i]))])
        .collect::<Vec<_>>();
    write_csv(path, &["parameter", "estimate", "std_error"], &rows)
}

fn write_covariance(fm: &FittedModel, unc: &UncertaintyResult, path: &Path) -> Result<usize> {
    let labels = fm.fit.spec.labels();
    let mut header = vec!["parameter"];
    header.extend(labels.iter().map(String::as_str));
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut r = vec![name.clone()];
            r.extend((0..labels.len()).map(|j| fmt_num(unc.covariance[(i, j)])));
            r
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}

fn write_grid(grid: &GridReport, path: &Path) -> Result<usize> {
    let header = [
        "rank",
        "deg_gamma",
        "deg_rho",
        "forcing",
        "k",
        "sse",
        "aic",
        "delta_aic",
        "bic",
        "delta_bic",
        "converged",
        "status",
    ];
    let rows = grid
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let scored = e.is_scored();
            let pick = |v: f64| opt_num(scored.then_some(v));
            let status = match (&e.failure, e.warnings.is_empty()) {
                (Some(f), _) => format!("failed: {f}"),
                (None, true) => "ok".to_string(),
                (None, false) => e.warnings.join("; "),
            };
            vec![
                (i + 1).to_string(),
                e.spec.deg_gamma().to_string(),
                e.spec.deg_rho().to_string(),
                if e.spec.forcing() { "Y" } else { "N" }.to_string(),
                e.k.to_string(),
                opt_num(e.sse()),
                pick(e.aic),
                pick(e.delta_aic),
                pick(e.bic),
                pick(e.delta_bic),
                yes_no(e.fit.as_ref().is_some_and(|f| f.converged)),
                status,
            ]
        })
        .chain(grid.skipped.iter().map(|s| {
            let mut row = vec![
                "NA".to_string(),
                s.spec.deg_gamma().to_string(),
                s.spec.deg_rho().to_string(),
                if s.spec.forcing() { "Y" } else { "N" }.to_string(),
                s.spec.n_params().to_string(),
            ];
            row.extend(std::iter::repeat_n("NA".to_string(), 5));
            row.extend(["N".to_string(), format!("skipped: {}", s.reason)]);
            row
        }))
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}

fn write_truncation(rob: &RobustnessReport, path: &Path) -> Result<usize> {
    let rows = rob
        .truncation_rows
        .iter()
        .map(|r| {
            vec![
                r.start_year.to_string(),
                r.end_year.to_string(),
                yes_no(r.converged),
                r.k.to_string(),
                fmt_num(r.sse),
                fmt_num(r.pooled_log_rmse),
            ]
        })
        .collect::<Vec<_>>();
    write_csv(
        path,
        &["start_year", "end_year", "converged", "k", "sse", "pooled_log_rmse"],
        &rows,
    )
}

fn write_hindcast(rob: &RobustnessReport, path: &Path) -> Result<usize> {
    let rows = rob
        .hindcast
        .predictions
        .iter()
        .map(|p| {
            vec![
                p.cutoff.to_string(),
                p.target_year.to_string(),
                yes_no(p.converged),
                fmt_num(p.sse),
                fmt_num(p.observed_m),
                fmt_num(p.predicted_m),
                fmt_num(p.error_m),
                fmt_num(p.observed_p),
                fmt_num(p.predicted_p),
                fmt_num(p.error_p),
            ]
        })
        .collect::<Vec<_>>();
    let header = [
        "cutoff",
        "target_year",
        "converged",
        "sse",
        "observed_m",
        "predicted_m",
        "error_m",
        "observed_p",
        "predicted_p",
        "error_p",
    ];
    write_csv(path, &header, &rows)
}

fn fit_json(fit: &FitResult) -> Value {
    json!({
        "spec": fit.spec,
        "k": fit.spec.n_params(),
        "sse": fit.sse,
        "converged": fit.converged,
        "termination": fit.termination,
        "iterations": fit.n_iterations,
        "grad_norm": fit.grad_norm_at_opt,
        "n_starts_used": fit.n_starts_used,
        "best_start": fit.best_start,
        "failure": fit.failure,
        "parameters": fit.spec.labels().into_iter().zip(fit.theta_hat.as_slice())
            .map(|(name, v)| json!({"name": name, "estimate": v}))
            .collect::<Vec<_>>(),
    })
}

fn report_json(out: &RunOutput) -> Value {
    // Thread count and output location do not affect results; leaving them
    // out keeps reports identical across machines and directories.
    let mut config = out.config.clone();
    config.threads = None;
    config.out_dir = None;
    let mut doc = json!({
        "command": out.command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    let map = doc.as_object_mut().expect("object literal");
    if let Some(obs) = &out.observed {
        map.insert(
            "data".into(),
            json!({
                "t_min": obs.grid().t_min(),
                "t_max": obs.grid().t_max(),
                "years": obs.len(),
                "has_forcing": obs.has_forcing(),
            }),
        );
    }
    if let Some(fm) = &out.fitted {
        let mut f = fit_json(&fm.fit);
        let rmse = log_rmse(fm.fit.sse, 2 * fm.residuals.years.len());
        let obj = f.as_object_mut().expect("object literal");
        obj.insert("seed".into(), json!(out.config.fit.seed));
        obj.insert("n".into(), json!(fm.n));
        obj.insert("n_eff".into(), json!(fm.n_eff));
        obj.insert("aic".into(), json!(fm.aic));
        obj.insert("bic".into(), json!(fm.bic));
        obj.insert("log_rmse".into(), json!(rmse));
        obj.insert("multiplicative_error".into(), json!(multiplicative_error(rmse)));
        obj.insert("lambda".into(), json!(fm.trajectories.lambda()));
        obj.insert("starts".into(), json!(fm.fit.starts));
        if let Some(unc) = &out.uncertainty {
            if let Some(Value::Array(params)) = obj.get_mut("parameters") {
                for (p, se) in params.iter_mut().zip(unc.std_errors()) {
                    p["std_error"] = json!(se);
                }
            }
        }
        map.insert("fit".into(), f);
        let r = &fm.residuals;
        map.insert(
            "residuals".into(),
            json!({
                "masters": r.masters,
                "phd": r.phd,
                "share_within_0.05": r.share_within(0.05),
                "share_within_0.10": r.share_within(0.10),
            }),
        );
    }
    if let Some(unc) = &out.uncertainty {
        let mut u = json!({
            "sigma2_hat": unc.sigma2_hat,
            "n_eff": unc.n_eff,
            "k": unc.k,
            "regularization_applied": unc.regularization_applied,
        });
        if let Some(b) = &out.bands {
            u["bands"] = json!({
                "level": b.level,
                "n_draws": b.n_draws,
                "seed": out.config.uncertainty.seed,
            });
        }
        map.insert("uncertainty".into(), u);
    }
    if let Some(g) = &out.grid {
        let entries = g
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let scored = e.is_scored();
                json!({
                    "rank": i + 1,
                    "spec": e.spec,
                    "k": e.k,
                    "sse": e.sse(),
                    "aic": scored.then_some(e.aic),
                    "delta_aic": scored.then_some(e.delta_aic),
                    "bic": scored.then_some(e.bic),
                    "delta_bic": scored.then_some(e.delta_bic),
                    "converged": e.fit.as_ref().map(|f| f.converged),
                    "failure": e.failure,
                    "warnings": e.warnings,
                })
            })
            .collect::<Vec<_>>();
        map.insert(
            "grid".into(),
            json!({
                "n": g.n,
                "sample_size": g.sample_size,
                "entries": entries,
                "skipped": g.skipped,
            }),
        );
    }
    if let Some(rob) = &out.robustness {
        let rows = rob
            .truncation_rows
            .iter()
            .map(|r| {
                json!({
                    "start_year": r.start_year,
                    "end_year": r.end_year,
                    "converged": r.converged,
                    "k": r.k,
                    "sse": r.sse,
                    "pooled_log_rmse": r.pooled_log_rmse,
                    "parameters": fit_json(&r.fit)["parameters"],
                })
            })
            .collect::<Vec<_>>();
        map.insert(
            "robustness".into(),
            json!({
                "spec": rob.spec,
                "rescaling": rob.rescaling,
                "truncation": rows,
                "hindcast": rob.hindcast,
            }),
        );
    }
    if let Some((scenario, _)) = &out.synthetic {
        map.insert("scenario".into(), json!(scenario));
    }
    if !out.warnings.is_empty() {
        map.insert("warnings".into(), json!(out.warnings));
    }
    doc
}
