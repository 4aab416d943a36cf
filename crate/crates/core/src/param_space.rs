//! Mapping between parameter sets and swarm search vectors.
//!
//! The saturation current coefficient spans several decades, so it is
//! searched in log10 coordinates; every other parameter is searched
//! linearly. Parameters that are not free stay pinned at a reference set.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::pso::Bounds;
use crate::scalar::Scalar;
use crate::sd_model::{PvParams, PARAM_NAMES};

/// Per-parameter feasible box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds<T = f64> {
    pub lower: PvParams<T>,
    pub upper: PvParams<T>,
}

impl Default for ParamBounds<f64> {
    fn default() -> Self {
        Self {
            lower: PvParams { rs: 0.001, rsh: 10.0, kd: 0.5, iph0: 0.1, is0: 1e-12 },
            upper: PvParams { rs: 10.0, rsh: 5000.0, kd: 2.0, iph0: 20.0, is0: 1e-6 },
        }
    }
}

impl<T: Scalar> ParamBounds<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let lo = self.lower.to_array();
        let hi = self.upper.to_array();
        for k in 0..5 {
            if !(lo[k] > T::zero() && lo[k] < hi[k] && hi[k].is_finite()) {
                return Err(ConfigError::Bounds(format!(
                    "{}: [{}, {}] must be a non-empty positive interval",
                    PARAM_NAMES[k], lo[k], hi[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &PvParams<T>) -> bool {
        let (lo, hi, x) = (self.lower.to_array(), self.upper.to_array(), p.to_array());
        (0..5).all(|k| x[k] >= lo[k] && x[k] <= hi[k])
    }

    pub fn clamp(&self, p: &PvParams<T>) -> PvParams<T> {
        let (lo, hi, mut x) = (self.lower.to_array(), self.upper.to_array(), p.to_array());
        for k in 0..5 {
            x[k] = x[k].max(lo[k]).min(hi[k]);
        }
        PvParams::from_array(x)
    }

    pub fn cast<U: Scalar>(&self) -> ParamBounds<U> {
        ParamBounds { lower: self.lower.cast(), upper: self.upper.cast() }
    }
}

/// Index of the log-scaled coordinate.
const LOG_PARAM: usize = 4;

/// Which of `[rs, rsh, kd, iph0, is0]` the swarm may move.
pub type FreeMask = [bool; 5];

/// Series and shunt resistance only.
pub const RESISTANCES_ONLY: FreeMask = [true, true, false, false, false];
pub const ALL_FREE: FreeMask = [true; 5];

pub struct ParamSpace<T: Scalar> {
    bounds: ParamBounds<T>,
    free: FreeMask,
    pinned: PvParams<T>,
}

impl<T: Scalar> ParamSpace<T> {
    pub fn new(bounds: ParamBounds<T>, free: FreeMask, pinned: PvParams<T>) -> Self {
        Self { bounds, free, pinned }
    }

    fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..5).filter(|k| self.free[*k])
    }

    fn encode(k: usize, x: T) -> T {
        if k == LOG_PARAM {
            x.log10()
        } else {
            x
        }
    }

    fn decode(k: usize, y: T) -> T {
        if k == LOG_PARAM {
            T::lit(10.0).powf(y)
        } else {
            y
        }
    }

    pub fn search_bounds(&self) -> Result<Bounds<T>, ConfigError> {
        let lo = self.bounds.lower.to_array();
        let hi = self.bounds.upper.to_array();
        let idx: Vec<usize> = self.free_indices().collect();
        Bounds::new(
            idx.iter().map(|&k| Self::encode(k, lo[k])).collect(),
            idx.iter().map(|&k| Self::encode(k, hi[k])).collect(),
        )
    }

    /// Search vector of a full parameter set (pinned coordinates dropped).
    pub fn to_search(&self, p: &PvParams<T>) -> Vec<T> {
        let x = self.bounds.clamp(p).to_array();
        self.free_indices().map(|k| Self::encode(k, x[k])).collect()
    }

    /// Parameter set of a search vector, clamped onto the feasible box.
    pub fn to_params(&self, y: &[T]) -> PvParams<T> {
        let mut x = self.pinned.to_array();
        for (k, v) in self.free_indices().zip(y) {
            x[k] = Self::decode(k, *v);
        }
        self.bounds.clamp(&PvParams::from_array(x))
    }
}
