use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(s: ModelSpec) -> String {
        s.to_string()
    }
}

/// Lower cap on the raw forcing coefficient; `exp(-40)` is still a normal float.
pub const LAMBDA_RAW_FLOOR: f64 = -40.0;

/// Names of the three branching fractions, in coefficient order.
pub const RHO_NAMES: [&str; 3] = ["BM", "BP", "MP"];
/// Names of the two completion hazards, in coefficient order.
pub const GAMMA_NAMES: [&str; 2] = ["M", "P"];

/// One point of the specification grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    deg_gamma: u8,
    deg_rho: u8,
    forcing: bool,
}

impl ModelSpec {
    pub fn new(deg_gamma: u8, deg_rho: u8, forcing: bool) -> Result<Self> {
        for d in [deg_gamma, deg_rho] {
            if d > 2 {
                return Err(Error::InvalidDegree(d));
            }
        }
        Ok(Self {
            deg_gamma,
            deg_rho,
            forcing,
        })
    }

    /// Quadratic hazards and branching fractions, no forcing.
    pub fn preferred() -> Self {
        Self {
            deg_gamma: 2,
            deg_rho: 2,
            forcing: false,
        }
    }

    pub fn deg_gamma(&self) -> u8 {
        self.deg_gamma
    }

    pub fn deg_rho(&self) -> u8 {
        self.deg_rho
    }

    pub fn forcing(&self) -> bool {
        self.forcing
    }

    pub fn rho_block_len(&self) -> usize {
        usize::from(self.deg_rho) + 1
    }

    pub fn gamma_block_len(&self) -> usize {
        usize::from(self.deg_gamma) + 1
    }

    /// Free-parameter count `k`.
    pub fn n_params(&self) -> usize {
        3 * self.rho_block_len() + 2 * self.gamma_block_len() + usize::from(self.forcing)
    }

    /// Position in the canonical enumeration (γ degree, then ρ degree, then forcing).
    pub fn index(&self) -> usize {
        usize::from(self.deg_gamma) * 6 + usize::from(self.deg_rho) * 2 + usize::from(self.forcing)
    }

    /// All 18 specifications in canonical order.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::with_capacity(18);
        for deg_gamma in 0..=2 {
            for deg_rho in 0..=2 {
                for forcing in [false, true] {
                    out.push(Self {
                        deg_gamma,
                        deg_rho,
                        forcing,
                    });
                }
            }
        }
        out
    }

    /// Coefficient labels in vector order.
    pub fn labels(&self) -> Vec<String> {
        const POWER: [&str; 3] = ["a", "b", "c"];
        let mut out = Vec::with_capacity(self.n_params());
        for name in RHO_NAMES {
            for p in POWER.iter().take(self.rho_block_len()) {
                out.push(format!("{p}_{name}"));
            }
        }
        for name in GAMMA_NAMES {
            for d in 0..self.gamma_block_len() {
                out.push(format!("eta_{name}{d}"));
            }
        }
        if self.forcing {
            out.push("log_lambda".to_string());
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let forcing = if self.forcing { "forcing" } else { "none" };
        write!(f, "{},{},{}", self.deg_gamma, self.deg_rho, forcing)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `deg_gamma,deg_rho,forcing`, e.g. `2,2,none` or `1,2,forcing`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::SpecSyntax(s.to_string());
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [g, r, f] = parts.as_slice() else {
            return Err(bad());
        };
        let deg_gamma: u8 = g.parse().map_err(|_| bad())?;
        let deg_rho: u8 = r.parse().map_err(|_| bad())?;
        let forcing = match f.to_ascii_lowercase().as_str() {
            "none" | "no" | "n" | "false" => false,
            "forcing" | "yes" | "y" | "true" | "intl" => true,
            _ => return Err(bad()),
        };
        Self::new(deg_gamma, deg_rho, forcing)
    }
}

/// Unconstrained parameter vector.
///
/// Layout: three branching-fraction blocks (BM, BP, MP) of `deg_rho + 1`
/// logit coefficients each, ordered constant, linear, quadratic; then two
/// hazard blocks (M, P) of `deg_gamma + 1`; then `lambda_raw` when forcing
/// is on, with `lambda = exp(lambda_raw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Assemble from per-function coefficient blocks.
    pub fn from_blocks(
        spec: &ModelSpec,
        rho: [&[f64]; 3],
        gamma: [&[f64]; 2],
        lambda_raw: Option<f64>,
    ) -> Result<Self> {
        let mut v = Vec::with_capacity(spec.n_params());
        for block in rho {
            v.extend_from_slice(block);
        }
        for block in gamma {
            v.extend_from_slice(block);
        }
        v.extend(lambda_raw);
        let theta = Self(v);
        theta.check(spec)?;
        Ok(theta)
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.0.len() != spec.n_params() {
            return Err(Error::ThetaLength {
                spec: spec.to_string(),
                expected: spec.n_params(),
                got: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Branching-fraction block `i` (0 = BM, 1 = BP, 2 = MP).
    pub fn rho_block(&self, spec: &ModelSpec, i: usize) -> &[f64] {
        let n = spec.rho_block_len();
        &self.0[i * n..(i + 1) * n]
    }

    /// Hazard block `i` (0 = M, 1 = P).
    pub fn gamma_block(&self, spec: &ModelSpec, i: usize) -> &[f64] {
        let start = 3 * spec.rho_block_len();
        let n = spec.gamma_block_len();
        &self.0[start + i * n..start + (i + 1) * n]
    }

    pub fn lambda_raw(&self, spec: &ModelSpec) -> Option<f64> {
        spec.forcing().then(|| self.0[spec.n_params() - 1])
    }

    /// Forcing coefficient, zero when the specification has no forcing.
    pub fn lambda(&self, spec: &ModelSpec) -> f64 {
        self.lambda_raw(spec).map_or(0.0, |raw| raw.max(LAMBDA_RAW_FLOOR).exp())
    }
}

impl From<Vec<f64>> for ThetaVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
