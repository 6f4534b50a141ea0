use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitOptions;
use crate::model::ModelSpec;
use crate::selection::SampleSize;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FLOWFIT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

/// Truncated-sample start years.
pub const DEFAULT_TRUNCATION_STARTS: [i32; 3] = [1974, 1979, 1984];
/// Rolling-origin cutoffs.
pub const DEFAULT_HINDCAST_CUTOFFS: [i32; 6] = [1990, 1995, 2000, 2005, 2010, 2015];

/// A single specification or the whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SpecSelection {
    Single(ModelSpec),
    /// Every grid specification; single-spec outputs use the best by AIC.
    Grid,
}

impl Default for SpecSelection {
    fn default() -> Self {
        SpecSelection::Single(ModelSpec::preferred())
    }
}

impl FromStr for SpecSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("grid") {
            Ok(SpecSelection::Grid)
        } else {
            s.parse().map(SpecSelection::Single)
        }
    }
}

impl TryFrom<String> for SpecSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpecSelection> for String {
    fn from(s: SpecSelection) -> String {
        s.to_string()
    }
}

impl fmt::Display for SpecSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecSelection::Single(s) => s.fmt(f),
            SpecSelection::Grid => f.write_str("grid"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub n_draws: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            n_draws: 4000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    pub truncation_starts: Vec<i32>,
    pub hindcast_cutoffs: Vec<i32>,
    /// Add the full-sample estimate as an extra start for every refit.
    pub warm_start: bool,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            truncation_starts: DEFAULT_TRUNCATION_STARTS.to_vec(),
            hindcast_cutoffs: DEFAULT_HINDCAST_CUTOFFS.to_vec(),
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub sample_size: SampleSize,
}

/// Everything a run needs. Loaded from TOML, then overridden by flags; the
/// effective value is echoed into every run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub spec: SpecSelection,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    /// Scenario file for `synth`; the built-in reference scenario otherwise.
    pub scenario: Option<PathBuf>,
    pub fit: FitOptions,
    pub uncertainty: UncertaintyConfig,
    pub robust: RobustConfig,
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            spec: SpecSelection::default(),
            out_dir: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            threads: None,
            scenario: None,
            fit: FitOptions::default(),
            uncertainty: UncertaintyConfig::default(),
            robust: RobustConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Flag, then config, then the environment, then `results`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fit.n_starts == 0 {
            return Err(Error::Config("fit.n_starts must be at least 1".into()));
        }
        if !(self.uncertainty.level > 0.0 && self.uncertainty.level < 1.0) {
            return Err(Error::Config(format!(
                "uncertainty.level {} is outside (0, 1)",
                self.uncertainty.level
            )));
        }
        if self.uncertainty.n_draws < 2 {
            return Err(Error::Config("uncertainty.n_draws must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}
