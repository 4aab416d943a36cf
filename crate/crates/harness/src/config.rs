//! Run configuration, read from JSON and overridden by CLI flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pvdt_core::{CoOptConfig, PlantConstants, PvParams, UpdatePolicy};

use crate::error::{HarnessError, Result};
use crate::formats::{load_bounds, load_params};
use crate::tracker::TransientConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Datasheet parameters, measured irradiance.
    Base,
    /// Datasheet parameters, estimated irradiance.
    Method1,
    /// Parameters refit at the measured irradiance.
    Method2,
    /// Co-optimized irradiance and parameters.
    #[default]
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Base, Method::Method1, Method::Method2, Method::Proposed];

    pub fn needs_g_meas(self) -> bool {
        matches!(self, Method::Base | Method::Method2)
    }

    /// Whether the method ever changes its parameters.
    pub fn updates(self) -> bool {
        matches!(self, Method::Method2 | Method::Proposed)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Method1 => "method1",
            Method::Method2 => "method2",
            Method::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub policy: UpdatePolicy,
    /// Replay resolution (s).
    pub resample_s: f64,
    pub seed: u64,
    pub plant: PlantConstants,
    /// Search intervals, swarm settings, tier threshold and dark thresholds.
    pub coopt: CoOptConfig,
    /// Initial parameters; takes precedence over `params_file`.
    pub warm_start: Option<PvParams>,
    pub params_file: Option<PathBuf>,
    /// Replaces `coopt.x2_bounds` when set.
    pub bounds_file: Option<PathBuf>,
    /// Replay only samples with `window_start <= ts < window_end` (Unix s).
    pub window_start: Option<f64>,
    pub window_end: Option<f64>,
    pub ss_tail_fraction: f64,
    /// Simulate a tracker transient after every update and report its TRI.
    pub transients: bool,
    pub transient: TransientConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Proposed,
            policy: UpdatePolicy::default(),
            resample_s: 10.0,
            seed: 0,
            plant: PlantConstants::default(),
            coopt: CoOptConfig::default(),
            warm_start: None,
            params_file: None,
            bounds_file: None,
            window_start: None,
            window_end: None,
            ss_tail_fraction: pvdt_core::metrics::DEFAULT_SS_TAIL_FRACTION,
            transients: true,
            transient: TransientConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resample_s > 0.0 && self.resample_s.is_finite()) {
            return Err(HarnessError::Config(format!("resample_s = {}", self.resample_s)));
        }
        self.policy.validate(self.resample_s)?;
        self.coopt.validate()?;
        self.plant.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.ss_tail_fraction > 0.0 && self.ss_tail_fraction <= 1.0) {
            return Err(HarnessError::Config(format!("ss_tail_fraction = {}", self.ss_tail_fraction)));
        }
        if let (Some(a), Some(b)) = (self.window_start, self.window_end) {
            if a >= b {
                return Err(HarnessError::Config(format!("empty window [{a}, {b})")));
            }
        }
        Ok(())
    }

    /// Loads the bounds file into `coopt.x2_bounds` and returns the warm
    /// start (explicit, from file, or the datasheet optimum).
    pub fn resolve(&mut self) -> Result<PvParams> {
        if let Some(path) = &self.bounds_file {
            self.coopt.x2_bounds = load_bounds(path)?;
        }
        let warm = match (&self.warm_start, &self.params_file) {
            (Some(p), _) => *p,
            (None, Some(path)) => load_params(path)?,
            (None, None) => PvParams::DATASHEET_OPT,
        };
        warm.validate().map_err(|e| HarnessError::Config(format!("warm start: {e}")))?;
        self.validate()?;
        Ok(warm)
    }
}
