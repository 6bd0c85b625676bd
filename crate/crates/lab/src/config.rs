//! Experiment files.
//!
//! One TOML document with an optional table per experiment; every key has a
//! default that reproduces the reference setup.
//!
//! ```toml
//! [rate-vs-n]
//! antennas = [20, 60, 120]
//! dof = ["N", "N/3"]
//! trials = 200
//!
//! [dof-contour]
//! alphas = [0.3]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::LabError;

/// Power decibels to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// How the number of angular bins `P` follows `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DofRule {
    /// `P = N`.
    Full,
    /// `P = round(N / d)`, at least 1.
    Fraction(usize),
    /// Fixed `P`.
    Fixed(usize),
}

impl DofRule {
    pub fn dof(&self, antennas: usize) -> usize {
        match *self {
            DofRule::Full => antennas,
            DofRule::Fraction(d) => ((antennas as f64 / d as f64).round() as usize).max(1),
            DofRule::Fixed(p) => p,
        }
    }
}

impl fmt::Display for DofRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DofRule::Full => write!(f, "N"),
            DofRule::Fraction(d) => write!(f, "N/{d}"),
            DofRule::Fixed(p) => write!(f, "{p}"),
        }
    }
}

impl From<DofRule> for String {
    fn from(rule: DofRule) -> Self {
        rule.to_string()
    }
}

impl TryFrom<String> for DofRule {
    type Error = String;

    fn try_from(text: String) -> Result<Self, String> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact.strip_prefix("P=").unwrap_or(&compact);
        let bad = || format!("invalid DoF rule {text:?}; expected \"N\", \"N/d\" or an integer");
        if body == "N" {
            return Ok(DofRule::Full);
        }
        if let Some(d) = body.strip_prefix("N/") {
            return match d.parse::<usize>() {
                Ok(d) if d > 0 => Ok(DofRule::Fraction(d)),
                _ => Err(bad()),
            };
        }
        match body.parse::<usize>() {
            Ok(p) if p > 0 => Ok(DofRule::Fixed(p)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RateVsNConfig {
    pub cells: usize,
    pub users: usize,
    pub snr_db: f64,
    pub alpha: f64,
    /// Absent means noiseless training.
    pub training_snr_db: Option<f64>,
    pub antennas: Vec<usize>,
    pub dof: Vec<DofRule>,
    pub trials: u64,
    pub seed: u64,
    /// Base station whose users are simulated.
    pub reference_cell: usize,
}

impl Default for RateVsNConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            users: 10,
            snr_db: 0.0,
            alpha: 0.1,
            training_snr_db: None,
            antennas: (20..=400).step_by(20).collect(),
            dof: vec![DofRule::Full, DofRule::Fraction(3)],
            trials: 500,
            seed: 1,
            reference_cell: 0,
        }
    }
}

impl RateVsNConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.cells == 0 || self.users == 0 {
            return Err(LabError::config("rate-vs-n: cells and users must be positive"));
        }
        if self.reference_cell >= self.cells {
            return Err(LabError::config("rate-vs-n: reference-cell out of range"));
        }
        if !self.snr_db.is_finite() || self.training_snr_db.is_some_and(|x| !x.is_finite()) {
            return Err(LabError::config("rate-vs-n: SNR values must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LabError::config("rate-vs-n: alpha must lie in (0, 1]"));
        }
        if self.antennas.is_empty() || self.antennas.contains(&0) {
            return Err(LabError::config("rate-vs-n: antennas must be a nonempty list of positive counts"));
        }
        if self.dof.is_empty() {
            return Err(LabError::config("rate-vs-n: dof must be nonempty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DofContourConfig {
    pub cells: usize,
    pub alphas: Vec<f64>,
    /// `rho N` grid in dB.
    pub effective_snr_db: Vec<f64>,
    pub etas: Vec<f64>,
    /// Absent means `1 / (rho N)` at every point.
    pub lambda: Option<f64>,
}

impl Default for DofContourConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            alphas: vec![0.3, 0.1],
            effective_snr_db: (0..=40).map(f64::from).collect(),
            etas: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            lambda: None,
        }
    }
}

impl DofContourConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.cells == 0 {
            return Err(LabError::config("dof-contour: cells must be positive"));
        }
        if self.alphas.is_empty() || self.effective_snr_db.is_empty() || self.etas.is_empty() {
            return Err(LabError::config("dof-contour: grids must be nonempty"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(LabError::config("dof-contour: alphas must lie in (0, 1]"));
        }
        if self.etas.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(LabError::config("dof-contour: etas must lie in (0, 1)"));
        }
        if self.effective_snr_db.iter().any(|x| !x.is_finite()) {
            return Err(LabError::config("dof-contour: effective SNR values must be finite"));
        }
        if self.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return Err(LabError::config("dof-contour: lambda must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ValidateConfig {
    /// Check names to run; absent runs all of them.
    pub checks: Option<Vec<String>>,
    /// Per-check tolerance overrides.
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            checks: None,
            tolerances: BTreeMap::new(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentFile {
    pub rate_vs_n: RateVsNConfig,
    pub dof_contour: DofContourConfig,
    pub validate: ValidateConfig,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ExperimentFile) {
        if let Some(seed) = self.seed {
            file.rate_vs_n.seed = seed;
            file.validate.seed = seed;
        }
        if let Some(trials) = self.trials {
            file.rate_vs_n.trials = trials;
        }
    }
}
