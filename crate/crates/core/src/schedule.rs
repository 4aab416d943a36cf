//! When to push a parameter update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::irradiance::{DarkThresholds, Measurement};
use crate::metrics::relative_errors;
use crate::scalar::Scalar;
use crate::sd_model::{OperatingPoint, PvParams};

/// Fixed intervals swept by default, in seconds.
pub const DEFAULT_INTERVALS: [u32; 7] = [10, 60, 300, 600, 900, 1800, 3600];
pub const DEFAULT_EVENT_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdatePolicy {
    FixedInterval { interval_s: f64 },
    /// Update when either relative error exceeds `threshold`.
    EventTrigger { threshold: f64 },
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy::EventTrigger { threshold: DEFAULT_EVENT_THRESHOLD }
    }
}

impl UpdatePolicy {
    /// Intervals must be positive multiples of the optimization resolution.
    pub fn validate(&self, resolution_s: f64) -> Result<(), ConfigError> {
        match *self {
            UpdatePolicy::FixedInterval { interval_s } => {
                let k = interval_s / resolution_s;
                if !(interval_s > 0.0 && (k - k.round()).abs() < 1e-9) {
                    return Err(ConfigError::Pso(format!(
                        "interval {interval_s} s is not a positive multiple of {resolution_s} s"
                    )));
                }
            }
            UpdatePolicy::EventTrigger { threshold } => {
                if !(threshold > 0.0 && threshold.is_finite()) {
                    return Err(ConfigError::Pso(format!("event threshold {threshold} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Short label used in file names and summaries, e.g. `fixed-600` or
    /// `event-0.005`.
    pub fn label(&self) -> String {
        match self {
            UpdatePolicy::FixedInterval { interval_s } => format!("fixed-{interval_s}"),
            UpdatePolicy::EventTrigger { threshold } => format!("event-{threshold}"),
        }
    }
}

impl fmt::Display for UpdatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdatePolicy::FixedInterval { interval_s } => write!(f, "fixed:{interval_s}"),
            UpdatePolicy::EventTrigger { threshold } => write!(f, "event:{threshold}"),
        }
    }
}

impl FromStr for UpdatePolicy {
    type Err = ConfigError;

    /// Accepts `fixed:<seconds>`, `event:<threshold>` and bare `event`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Pso(format!("cannot parse policy '{s}' (expected fixed:<s> or event:<threshold>)"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |a: Option<&str>| a.and_then(|x| x.parse::<f64>().ok()).ok_or_else(bad);
        match kind {
            "fixed" => Ok(UpdatePolicy::FixedInterval { interval_s: num(arg)? }),
            "event" if arg.is_none() => Ok(UpdatePolicy::default()),
            "event" => Ok(UpdatePolicy::EventTrigger { threshold: num(arg)? }),
            _ => Err(bad()),
        }
    }
}

/// A parameter update that was actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent<T = f64> {
    pub ts: f64,
    pub prev_params: PvParams<T>,
    pub new_params: PvParams<T>,
    pub trigger_error_i: T,
    pub trigger_error_v: T,
}

/// Update decision for one sample.
///
/// `predicted` must come from the parameters currently in force.
pub fn should_update<T: Scalar>(
    policy: &UpdatePolicy,
    now: f64,
    last_update: f64,
    meas: &Measurement<T>,
    predicted: &OperatingPoint<T>,
    dark: &DarkThresholds,
) -> bool {
    match *policy {
        UpdatePolicy::FixedInterval { interval_s } => now - last_update >= interval_s,
        UpdatePolicy::EventTrigger { threshold } => {
            let e = relative_errors(meas, predicted, dark);
            let th = T::lit(threshold);
            e.i > th || e.v > th
        }
    }
}
