//! Scenario configuration: defaults per scenario, a flat `key = value` file
//! and command-line overrides, applied in that order.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use fbm_mkv::fbm::DiffusionNormalization;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// `α = 0`, `β = 1`, `X_0 = 0`.
    FbmLaw,
    /// `α = α₀ E[X]`, `β = β₀ E[X]`, `X_0 = z₀`.
    Geometric,
    /// Constant coefficients `α = α₀`, `β = β₀`, `X_0 = z₀`.
    Custom,
}

impl FromStr for Scenario {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fbm-law" => Ok(Self::FbmLaw),
            "geometric" => Ok(Self::Geometric),
            "custom" => Ok(Self::Custom),
            other => Err(CliError::Config(format!(
                "unknown scenario '{other}' (expected fbm-law, geometric or custom)"
            ))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FbmLaw => "fbm-law",
            Self::Geometric => "geometric",
            Self::Custom => "custom",
        })
    }
}

/// Every recognised configuration key (snake_case in files, kebab-case on
/// the command line).
pub const KEYS: &[&str] = &[
    "scenario",
    "h",
    "t_end",
    "steps",
    "fp_steps",
    "t0",
    "half_width",
    "cells",
    "n_particles",
    "seed",
    "alpha0",
    "beta0",
    "z0",
    "l1_tol",
    "kde_tol",
    "m_dist_tol",
    "n_se",
    "normalization",
    "frequencies",
    "fourier_particles",
    "fourier_steps",
    "refinement_levels",
    "fourier_replicates",
    "h_list",
    "t_list",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub h: f64,
    pub t_end: f64,
    /// Euler steps of the particle system.
    pub steps: usize,
    /// Time steps of the Fokker-Planck solve from `t0` to `t_end`.
    pub fp_steps: usize,
    /// Start time of the mollified Fokker-Planck initial density.
    pub t0: f64,
    pub half_width: f64,
    pub cells: usize,
    pub n_particles: usize,
    pub seed: u64,
    pub alpha0: f64,
    pub beta0: f64,
    pub z0: f64,
    pub l1_tol: f64,
    pub kde_tol: f64,
    pub m_dist_tol: f64,
    /// Width of statistical acceptance bands in standard errors.
    pub n_se: f64,
    pub normalization: DiffusionNormalization,
    pub frequencies: Vec<f64>,
    pub fourier_particles: usize,
    pub fourier_steps: usize,
    pub refinement_levels: usize,
    /// Independent repetitions of the refinement study; level maxima are
    /// averaged over them.
    pub fourier_replicates: usize,
    pub h_list: Vec<f64>,
    pub t_list: Vec<f64>,
}

impl ScenarioConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let base = Self {
            scenario,
            h: 0.75,
            t_end: 1.0,
            steps: 64,
            fp_steps: 256,
            t0: 0.05,
            half_width: 8.0,
            cells: 400,
            n_particles: 5000,
            seed: 20240917,
            alpha0: 0.0,
            beta0: 1.0,
            z0: 0.0,
            l1_tol: 1e-2,
            kde_tol: 5e-2,
            m_dist_tol: 1e-2,
            n_se: 3.0,
            normalization: DiffusionNormalization::CovarianceConsistent,
            frequencies: vec![0.0, 0.5, 1.0, 2.0],
            fourier_particles: 10_000,
            fourier_steps: 64,
            refinement_levels: 3,
            fourier_replicates: 32,
            h_list: vec![0.6, 0.75, 0.9],
            t_list: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
        };
        match scenario {
            Scenario::FbmLaw => base,
            Scenario::Geometric => Self {
                steps: 256,
                fp_steps: 1024,
                half_width: 4.0,
                cells: 8000,
                n_particles: 10_000,
                alpha0: 0.5,
                beta0: 0.3,
                z0: 1.0,
                ..base
            },
            Scenario::Custom => Self {
                alpha0: 0.2,
                beta0: 0.5,
                z0: 0.0,
                ..base
            },
        }
    }

    /// Builds a configuration from an optional file and `(key, value)`
    /// overrides. The scenario (last value wins) selects the defaults; all
    /// other keys are then applied in order.
    pub fn load(
        file: Option<&Path>,
        overrides: &[(String, String)],
        default_scenario: Scenario,
    ) -> Result<Self, CliError> {
        let mut pairs = match file {
            Some(path) => parse_file(path)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        let scenario = match pairs.iter().rev().find(|(k, _)| k == "scenario") {
            Some((_, v)) => v.parse()?,
            None => default_scenario,
        };
        let mut cfg = Self::defaults(scenario);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "scenario") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "scenario" => self.scenario = value.parse()?,
            "h" => self.h = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "fp_steps" => self.fp_steps = num(key, value)?,
            "t0" => self.t0 = num(key, value)?,
            "half_width" => self.half_width = num(key, value)?,
            "cells" => self.cells = num(key, value)?,
            "n_particles" => self.n_particles = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "alpha0" => self.alpha0 = num(key, value)?,
            "beta0" => self.beta0 = num(key, value)?,
            "z0" => self.z0 = num(key, value)?,
            "l1_tol" => self.l1_tol = num(key, value)?,
            "kde_tol" => self.kde_tol = num(key, value)?,
            "m_dist_tol" => self.m_dist_tol = num(key, value)?,
            "n_se" => self.n_se = num(key, value)?,
            "normalization" => {
                self.normalization = match value {
                    "covariance-consistent" => DiffusionNormalization::CovarianceConsistent,
                    "as-printed" => DiffusionNormalization::AsPrinted,
                    other => {
                        return Err(CliError::Config(format!(
                        "normalization must be covariance-consistent or as-printed, got '{other}'"
                    )))
                    }
                }
            }
            "frequencies" => self.frequencies = list(key, value)?,
            "fourier_particles" => self.fourier_particles = num(key, value)?,
            "fourier_steps" => self.fourier_steps = num(key, value)?,
            "refinement_levels" => self.refinement_levels = num(key, value)?,
            "fourier_replicates" => self.fourier_replicates = num(key, value)?,
            "h_list" => self.h_list = list(key, value)?,
            "t_list" => self.t_list = list(key, value)?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let hurst_ok = |h: f64| h > 0.5 && h < 1.0;
        if !hurst_ok(self.h) || !self.h_list.iter().all(|&h| hurst_ok(h)) {
            return bad(format!(
                "Hurst index must lie in (0.5, 1); every formula used here (the operator M, \
                 the covariance constant) requires H > 1/2 (got h = {}, h_list = {:?})",
                self.h, self.h_list
            ));
        }
        for (name, v) in [
            ("t_end", self.t_end),
            ("half_width", self.half_width),
            ("n_se", self.n_se),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite (got {v})"));
            }
        }
        // zero tolerances are allowed; they make every thresholded row fail
        for (name, v) in [
            ("l1_tol", self.l1_tol),
            ("kde_tol", self.kde_tol),
            ("m_dist_tol", self.m_dist_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative and finite (got {v})"));
            }
        }
        if !(self.t0 > 0.0 && self.t0 < self.t_end) {
            return bad(format!("t0 must lie in (0, t_end) (got {})", self.t0));
        }
        let counts = [
            ("steps", self.steps, 2),
            ("fp_steps", self.fp_steps, 1),
            ("cells", self.cells, 2),
            ("n_particles", self.n_particles, 1),
            ("fourier_particles", self.fourier_particles, 2),
            ("fourier_steps", self.fourier_steps, 2),
            ("refinement_levels", self.refinement_levels, 1),
            ("fourier_replicates", self.fourier_replicates, 1),
        ];
        for (name, v, min) in counts {
            if v < min {
                return bad(format!("{name} must be at least {min} (got {v})"));
            }
        }
        if self.frequencies.is_empty() || self.t_list.iter().any(|t| t.is_nan() || *t < 0.0) {
            return bad("frequencies must be non-empty and t_list nonnegative".into());
        }
        if ![self.alpha0, self.beta0, self.z0]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("model parameters must be finite".into());
        }
        Ok(())
    }

    /// One `key = value` line per field, in [`KEYS`] order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("scenario".into(), self.scenario.to_string()),
            ("h".into(), self.h.to_string()),
            ("t_end".into(), self.t_end.to_string()),
            ("steps".into(), self.steps.to_string()),
            ("fp_steps".into(), self.fp_steps.to_string()),
            ("t0".into(), self.t0.to_string()),
            ("half_width".into(), self.half_width.to_string()),
            ("cells".into(), self.cells.to_string()),
            ("n_particles".into(), self.n_particles.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("alpha0".into(), self.alpha0.to_string()),
            ("beta0".into(), self.beta0.to_string()),
            ("z0".into(), self.z0.to_string()),
            ("l1_tol".into(), self.l1_tol.to_string()),
            ("kde_tol".into(), self.kde_tol.to_string()),
            ("m_dist_tol".into(), self.m_dist_tol.to_string()),
            ("n_se".into(), self.n_se.to_string()),
            ("normalization".into(), self.normalization.label().into()),
            ("frequencies".into(), join(&self.frequencies)),
            (
                "fourier_particles".into(),
                self.fourier_particles.to_string(),
            ),
            ("fourier_steps".into(), self.fourier_steps.to_string()),
            (
                "refinement_levels".into(),
                self.refinement_levels.to_string(),
            ),
            (
                "fourier_replicates".into(),
                self.fourier_replicates.to_string(),
            ),
            ("h_list".into(), join(&self.h_list)),
            ("t_list".into(), join(&self.t_list)),
        ]
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

/// Reads `key = value` lines; `#` starts a comment. Keys are checked
/// against [`KEYS`] here so a typo names the offending line.
pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            )));
        };
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "{}:{}: unknown configuration key '{}'",
                path.display(),
                lineno + 1,
                key
            )));
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}
