use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{OutputFormat, RunConfig, SpecSelection};
use super::data::load_series;
use super::report::{write_reports, FittedModel, RunOutput};
use crate::diagnostics::{robustness, RobustOptions};
use crate::error::{Error, Result};
use crate::estimation::{confidence_bands, fit_spec, fit_uncertainty, sample_parameters};
use crate::model::{ModelSpec, ObservedSeries};
use crate::selection::{run_grid, select_best, Criterion, GridOptions, GridReport, SampleSize};
use crate::synthetic::{generate, SyntheticScenario};

/// Fit latent stock-flow models to bachelor's, master's and PhD completions.
#[derive(Debug, Parser)]
#[command(name = "flowfit", version, about)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: $FLOWFIT_OUT_DIR or ./results].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Base seed for optimizer starts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Optimizer starts per fit.
    #[arg(long, global = true, value_name = "N")]
    n_starts: Option<usize>,
    /// Output formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<OutputFormat>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one specification.
    Fit(DataArgs),
    /// Fit every specification and rank by AIC and BIC.
    Grid {
        #[command(flatten)]
        data: DataArgs,
        /// Residual count entering the criteria.
        #[arg(long, value_parser = parse_sample_size)]
        sample_size: Option<SampleSize>,
    },
    /// Fit, then compute the covariance and percentile bands.
    Bands {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        bands: BandArgs,
    },
    /// Fit and summarize the residuals.
    Diagnose(DataArgs),
    /// Start-year truncation and rolling-origin hindcasts.
    Robust {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        robust: RobustArgs,
    },
    /// Generate a synthetic data set with known parameters.
    Synth {
        /// Scenario TOML; the built-in reference scenario otherwise.
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        /// Log-scale noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        /// Noise seed.
        #[arg(long)]
        noise_seed: Option<u64>,
    },
    /// Grid, selected fit, bands, residuals and robustness in one run.
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        bands: BandArgs,
        #[command(flatten)]
        robust: RobustArgs,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV with columns year,bachelors,masters,phd[,phd_intl].
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Specification `deg_gamma,deg_rho,none|forcing`, or `grid` for the
    /// best by AIC.
    #[arg(long)]
    spec: Option<String>,
}

#[derive(Debug, Args)]
struct BandArgs {
    /// Parameter draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Band coverage level.
    #[arg(long)]
    level: Option<f64>,
    /// Seed for parameter draws.
    #[arg(long)]
    draw_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RobustArgs {
    /// Truncation start years, comma separated.
    #[arg(long, value_delimiter = ',')]
    truncation_starts: Option<Vec<i32>>,
    /// Hindcast cutoff years, comma separated.
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<i32>>,
    /// Also start every refit from the full-sample estimate.
    #[arg(long)]
    warm_start: bool,
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(format!("unknown format `{other}` (expected csv or json)")),
    }
}

fn parse_sample_size(s: &str) -> std::result::Result<SampleSize, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "observations" => Ok(SampleSize::Observations),
        "effective" => Ok(SampleSize::Effective),
        other => Err(format!(
            "unknown sample size `{other}` (expected observations or effective)"
        )),
    }
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
/// Bad arguments, configuration or data.
pub const EXIT_INPUT: i32 = 1;
/// Numerical failure, including fits that did not converge.
pub const EXIT_NUMERICAL: i32 = 2;

/// Parse `args` (program name first), run, write reports; returns the exit
/// code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) -> Result<()> {
    if let Some(p) = &d.data {
        cfg.data = Some(p.clone());
    }
    if let Some(s) = &d.spec {
        cfg.spec = s.parse()?;
    }
    Ok(())
}

fn apply_bands(cfg: &mut RunConfig, b: &BandArgs) {
    let u = &mut cfg.uncertainty;
    u.n_draws = b.draws.unwrap_or(u.n_draws);
    u.level = b.level.unwrap_or(u.level);
    u.seed = b.draw_seed.unwrap_or(u.seed);
}

fn apply_robust(cfg: &mut RunConfig, r: &RobustArgs) {
    if let Some(v) = &r.truncation_starts {
        cfg.robust.truncation_starts = v.clone();
    }
    if let Some(v) = &r.cutoffs {
        cfg.robust.hindcast_cutoffs = v.clone();
    }
    cfg.robust.warm_start |= r.warm_start;
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.out.is_some() {
        cfg.out_dir = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(s) = cli.seed {
        cfg.fit.seed = s;
    }
    if let Some(n) = cli.n_starts {
        cfg.fit.n_starts = n;
    }
    if let Some(f) = &cli.format {
        cfg.formats = f.clone();
    }
    match &cli.command {
        Command::Fit(d) | Command::Diagnose(d) => apply_data(&mut cfg, d)?,
        Command::Grid { data, sample_size } => {
            apply_data(&mut cfg, data)?;
            if let Some(s) = sample_size {
                cfg.grid.sample_size = *s;
            }
        }
        Command::Bands { data, bands } => {
            apply_data(&mut cfg, data)?;
            apply_bands(&mut cfg, bands);
        }
        Command::Robust { data, robust } => {
            apply_data(&mut cfg, data)?;
            apply_robust(&mut cfg, robust);
        }
        Command::Synth {
            scenario,
            noise: _,
            noise_seed: _,
        } => {
            if scenario.is_some() {
                cfg.scenario = scenario.clone();
            }
        }
        Command::Report { data, bands, robust } => {
            apply_data(&mut cfg, data)?;
            apply_bands(&mut cfg, bands);
            apply_robust(&mut cfg, robust);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = resolve_config(&cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    let (out, code) = pool.install(|| execute(&cli.command, &cfg))?;
    let dir = cfg.resolved_out_dir();
    let manifest = write_reports(&out, &dir)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    Ok(code)
}

fn load(cfg: &RunConfig) -> Result<ObservedSeries> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data file given (use --data or `data` in the config)".into()))?;
    load_series(path)
}

fn grid_options(cfg: &RunConfig) -> GridOptions {
    GridOptions {
        fit: cfg.fit.clone(),
        sample_size: cfg.grid.sample_size,
    }
}

fn print_grid(g: &GridReport) {
    println!(
        "{:>4}  {:<11} {:>3} {:>12} {:>10} {:>8} {:>10} {:>8}",
        "rank", "spec", "k", "sse", "aic", "d_aic", "bic", "d_bic"
    );
    for (i, e) in g.entries.iter().enumerate() {
        if e.is_scored() {
            println!(
                "{:>4}  {:<11} {:>3} {:>12.6} {:>10.1} {:>8.1} {:>10.1} {:>8.1}",
                i + 1,
                e.spec.to_string(),
                e.k,
                e.sse().unwrap_or(f64::NAN),
                e.aic,
                e.delta_aic,
                e.bic,
                e.delta_bic
            );
        } else {
            println!(
                "{:>4}  {:<11} {:>3}  failed: {}",
                i + 1,
                e.spec.to_string(),
                e.k,
                e.failure.as_deref().unwrap_or("")
            );
        }
    }
    for s in &g.skipped {
        println!("   -  {:<11} skipped: {}", s.spec.to_string(), s.reason);
    }
}

fn print_fit(fm: &FittedModel) {
    let f = &fm.fit;
    println!(
        "spec {}  k {}  SSE {:.6}  log-RMSE {:.4}  converged {}",
        f.spec,
        f.spec.n_params(),
        f.sse,
        fm.residuals.log_rmse,
        if f.converged { "yes" } else { "no" }
    );
    if let (Some(aic), Some(bic)) = (fm.aic, fm.bic) {
        println!("AIC {aic:.1}  BIC {bic:.1}  (N = {})", fm.n);
    }
}

/// Fit the configured specification, or the best of a fresh grid.
fn select_fit(obs: &ObservedSeries, cfg: &RunConfig, out: &mut RunOutput) -> Result<FittedModel> {
    let n = cfg.grid.sample_size.count(obs);
    let fit = match cfg.spec {
        SpecSelection::Single(spec) => fit_spec(obs, &spec, &cfg.fit)?,
        SpecSelection::Grid => {
            let g = run_grid(obs, &grid_options(cfg));
            let best = select_best(&g.entries, Criterion::Aic)?.clone();
            out.grid = Some(g);
            best.fit.expect("scored entries carry a fit")
        }
    };
    if let Some(reason) = &fit.failure {
        return Err(Error::Numerical(format!("fit of {} failed: {reason}", fit.spec)));
    }
    FittedModel::new(obs, fit, n)
}

fn convergence_code(fm: &FittedModel, out: &mut RunOutput) -> i32 {
    if fm.fit.converged {
        EXIT_OK
    } else {
        out.warnings.push(format!(
            "fit of {} did not converge ({:?}, gradient norm {:.3e})",
            fm.fit.spec, fm.fit.termination, fm.fit.grad_norm_at_opt
        ));
        EXIT_NUMERICAL
    }
}

fn add_uncertainty(obs: &ObservedSeries, fm: &FittedModel, out: &mut RunOutput) {
    match fit_uncertainty(obs, &fm.fit) {
        Ok(u) => {
            if u.regularization_applied {
                out.warnings
                    .push("Hessian was ill-conditioned; eigenvalues were floored".into());
            }
            out.uncertainty = Some(u);
        }
        Err(e) => out.warnings.push(format!("no standard errors: {e}")),
    }
}

fn add_bands(obs: &ObservedSeries, fm: &FittedModel, cfg: &RunConfig, out: &mut RunOutput) -> Result<()> {
    let unc = fit_uncertainty(obs, &fm.fit)?;
    if unc.regularization_applied {
        out.warnings
            .push("Hessian was ill-conditioned; eigenvalues were floored".into());
    }
    let u = &cfg.uncertainty;
    let draws = sample_parameters(&unc, &fm.fit.theta_hat, u.n_draws, u.seed)?;
    out.bands = Some(confidence_bands(&draws, &fm.fit.spec, obs.grid(), u.level)?);
    out.uncertainty = Some(unc);
    Ok(())
}

fn add_robustness(
    obs: &ObservedSeries,
    spec: &ModelSpec,
    fm: Option<&FittedModel>,
    cfg: &RunConfig,
    out: &mut RunOutput,
) -> Result<i32> {
    let opts = RobustOptions {
        fit: cfg.fit.clone(),
        warm_start: if cfg.robust.warm_start {
            fm.map(|f| f.fit.theta_hat.clone())
        } else {
            None
        },
    };
    let rob = robustness(
        obs,
        spec,
        &cfg.robust.truncation_starts,
        &cfg.robust.hindcast_cutoffs,
        &opts,
    )?;
    let mut converged = 0;
    let mut total = 0;
    for (label, ok) in rob
        .truncation_rows
        .iter()
        .map(|r| (format!("truncation start {}", r.start_year), r.converged))
        .chain(
            rob.hindcast
                .predictions
                .iter()
                .map(|p| (format!("hindcast cutoff {}", p.cutoff), p.converged)),
        )
    {
        total += 1;
        if ok {
            converged += 1;
        } else {
            out.warnings.push(format!("{label}: refit did not converge"));
        }
    }
    for r in &rob.truncation_rows {
        println!(
            "truncation {}-{}  SSE {:.4}  pooled log-RMSE {:.4}",
            r.start_year, r.end_year, r.sse, r.pooled_log_rmse
        );
    }
    let h = &rob.hindcast;
    println!(
        "hindcast RMSE  masters {:.4}  phd {:.4}  pooled {:.4}",
        h.rmse_m, h.rmse_p, h.rmse_pooled
    );
    out.robustness = Some(rob);
    Ok(if total > 0 && converged == 0 {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    })
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<(RunOutput, i32)> {
    let name = match cmd {
        Command::Fit(_) => "fit",
        Command::Grid { .. } => "grid",
        Command::Bands { .. } => "bands",
        Command::Diagnose(_) => "diagnose",
        Command::Robust { .. } => "robust",
        Command::Synth { .. } => "synth",
        Command::Report { .. } => "report",
    };
    let mut out = RunOutput::new(name, cfg);
    if let Command::Synth { noise, noise_seed, .. } = cmd {
        let mut scenario = match &cfg.scenario {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                    path: p.clone(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => SyntheticScenario::reference(),
        };
        scenario.noise_sd = noise.unwrap_or(scenario.noise_sd);
        scenario.seed = noise_seed.unwrap_or(scenario.seed);
        let data = generate(&scenario)?;
        println!(
            "generated {} years ({}-{}) from {} with noise sd {}",
            data.observed.len(),
            scenario.t_min,
            scenario.t_max,
            scenario.spec,
            scenario.noise_sd
        );
        out.observed = Some(data.observed.clone());
        out.synthetic = Some((scenario, data));
        return Ok((out, EXIT_OK));
    }

    let obs = load(cfg)?;
    out.observed = Some(obs.clone());
    let code = match cmd {
        Command::Grid { .. } => {
            let g = run_grid(&obs, &grid_options(cfg));
            print_grid(&g);
            let best = select_best(&g.entries, Criterion::Aic)
                .map(|_| ())
                .map_err(|e| e.to_string());
            for e in g
                .entries
                .iter()
                .flat_map(|e| e.warnings.iter().map(move |w| format!("{}: {w}", e.spec)))
            {
                out.warnings.push(e);
            }
            out.grid = Some(g);
            match best {
                Ok(_) => EXIT_OK,
                Err(e) => {
                    out.warnings.push(e);
                    EXIT_NUMERICAL
                }
            }
        }
        Command::Fit(_) | Command::Diagnose(_) => {
            let fm = select_fit(&obs, cfg, &mut out)?;
            add_uncertainty(&obs, &fm, &mut out);
            print_fit(&fm);
            if matches!(cmd, Command::Diagnose(_)) {
                let r = &fm.residuals;
                println!("residual sd  masters {:.4}  phd {:.4}", r.masters.sd, r.phd.sd);
                println!("share |r| <= 0.05: {:.3}", r.share_within(0.05));
            }
            let code = convergence_code(&fm, &mut out);
            out.fitted = Some(fm);
            code
        }
        Command::Bands { .. } => {
            let fm = select_fit(&obs, cfg, &mut out)?;
            print_fit(&fm);
            let code = convergence_code(&fm, &mut out);
            add_bands(&obs, &fm, cfg, &mut out)?;
            out.fitted = Some(fm);
            code
        }
        Command::Robust { .. } => {
            let spec = match cfg.spec {
                SpecSelection::Single(s) => s,
                SpecSelection::Grid => {
                    let g = run_grid(&obs, &grid_options(cfg));
                    let s = select_best(&g.entries, Criterion::Aic)?.spec;
                    out.grid = Some(g);
                    s
                }
            };
            let fm = if cfg.robust.warm_start {
                Some(FittedModel::new(
                    &obs,
                    fit_spec(&obs, &spec, &cfg.fit)?,
                    cfg.grid.sample_size.count(&obs),
                )?)
            } else {
                None
            };
            add_robustness(&obs, &spec, fm.as_ref(), cfg, &mut out)?
        }
        Command::Report { .. } => {
            let g = run_grid(&obs, &grid_options(cfg));
            print_grid(&g);
            let chosen = match cfg.spec {
                SpecSelection::Grid => select_best(&g.entries, Criterion::Aic)?,
                SpecSelection::Single(s) => g
                    .entries
                    .iter()
                    .find(|e| e.spec == s)
                    .ok_or_else(|| Error::Config(format!("specification {s} needs a phd_intl column")))?,
            };
            let fit = chosen
                .fit
                .clone()
                .filter(|f| f.failure.is_none())
                .ok_or_else(|| Error::Numerical(format!("fit of {} failed", chosen.spec)))?;
            let fm = FittedModel::new(&obs, fit, g.n)?;
            out.grid = Some(g);
            print_fit(&fm);
            let mut code = convergence_code(&fm, &mut out);
            add_bands(&obs, &fm, cfg, &mut out)?;
            let spec = fm.fit.spec;
            code = code.max(add_robustness(&obs, &spec, Some(&fm), cfg, &mut out)?);
            out.fitted = Some(fm);
            code
        }
        Command::Synth { .. } => unreachable!("handled above"),
    };
    Ok((out, code))
}
