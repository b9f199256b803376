//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::models::{models, BuiltModel, ModelSetup, ProblemTemplate};
use crate::solver::{Exponents, PicardOptions, Radii};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "QSPDE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemNumbers {
    pub exponents: Exponents,
    pub radii: Radii,
    pub delta: f64,
    pub holder_k: Option<f64>,
}

impl Default for ProblemNumbers {
    fn default() -> Self {
        let t = ProblemTemplate::default();
        Self {
            exponents: t.exponents,
            radii: t.radii,
            delta: t.delta,
            holder_k: t.holder_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Final time `T`.
    pub horizon: f64,
    pub h: f64,
    /// Galerkin modes `N` per component.
    pub modes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 0.05,
            h: 5e-4,
            modes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub master_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 1,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub sector_audit: bool,
    pub smoothing_audit: bool,
    pub at_modulus_fit: bool,
    pub cocycle: bool,
    pub ou_oracle: bool,
    pub ibp_audit: bool,
    /// Declared sector half-angle for the audit.
    pub sector_angle: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            sector_audit: true,
            smoothing_audit: true,
            at_modulus_fit: true,
            cocycle: true,
            ou_oracle: true,
            ibp_audit: true,
            sector_angle: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub level: f64,
    pub margin: f64,
    pub zero_factor: f64,
    pub bands: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            level: 100.0,
            margin: 0.15,
            zero_factor: 1.2,
            bands: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub problem: ProblemNumbers,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub solver: PicardOptions,
    /// Stopping thresholds `n_k`; empty runs a single solve to the horizon.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn template(&self) -> ProblemTemplate {
        ProblemTemplate {
            exponents: self.problem.exponents,
            radii: self.problem.radii,
            delta: self.problem.delta,
            holder_k: self.problem.holder_k,
            horizon: self.grid.horizon,
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_horizon(self.grid.horizon, self.grid.h).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every number and builds the model; all failures are config errors.
    pub fn prepare(&self) -> Result<Prepared> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.ensemble.samples == 0 {
            return Err(Error::Config("ensemble.samples must be at least 1".into()));
        }
        if self.grid.modes == 0 {
            return Err(Error::Config("grid.modes must be at least 1".into()));
        }
        if self.thresholds.windows(2).any(|p| !(p[1] > p[0])) || self.thresholds.iter().any(|n| !(*n > 0.0)) {
            return Err(Error::Config("thresholds must be positive and strictly increasing".into()));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::Config("solver.tol must be positive and solver.max_iter at least 1".into()));
        }
        if let Some(w) = self.solver.window {
            if !(w > 0.0) {
                return Err(Error::Config("solver.window must be positive".into()));
            }
        }
        let grid = self.time_grid()?;
        let model = models().get(&self.model).map_err(as_config)?;
        let built = model
            .build(
                &self.params,
                &ModelSetup {
                    modes: self.grid.modes,
                    template: self.template(),
                },
            )
            .map_err(as_config)?;
        let mut echo = self.clone();
        echo.params = built.params.clone();
        Ok(Prepared {
            config: echo,
            model: built,
            grid,
        })
    }
}

/// A validated config with its model built; `config.params` has defaults filled in.
pub struct Prepared {
    pub config: RunConfig,
    pub model: BuiltModel,
    pub grid: TimeGrid,
}

/// Worker count: `QSPDE_THREADS` wins over the flag, then the logical core count.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
            if n == 0 {
                return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
            }
            Ok(n)
        }
        _ => Ok(flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)),
    }
}
