//! Equivalent irradiance from a measured voltage/current/temperature sample.
//!
//! Given a candidate parameter set, the equivalent irradiance is the value
//! of G at which the measured point lies on the model I–V curve, found by
//! minimizing |f₁(G)| with the particle swarm over the X₁ interval.

use serde::{Deserialize, Serialize};

use crate::pso::{minimize, Bounds, PsoConfig};
use crate::scalar::Scalar;
use crate::sd_model::{kcl_residual, EnvInputs, PlantConstants, PvParams};

/// Objective value assigned to irradiance candidates with an infeasible
/// log argument.
pub const INFEASIBLE_PENALTY: f64 = 1e12;

/// One telemetry sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement<T = f64> {
    /// Seconds, monotone within a stream.
    pub ts: f64,
    pub v_meas: T,
    pub i_meas: T,
    /// Cell/array temperature (°C).
    pub t_meas: T,
    /// Pyranometer reading, if the source has one (W/m²).
    pub g_meas: Option<T>,
    pub p_meas: T,
}

impl<T: Scalar> Measurement<T> {
    /// Sample with `p_meas = v·i` and no irradiance reading.
    pub fn new(ts: f64, v_meas: T, i_meas: T, t_meas: T) -> Self {
        Self { ts, v_meas, i_meas, t_meas, g_meas: None, p_meas: v_meas * i_meas }
    }

    pub fn with_g(mut self, g: T) -> Self {
        self.g_meas = Some(g);
        self
    }

    /// Non-negative V and I, irradiance reading within [0, 1500] W/m².
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_meas >= T::zero()) {
            return Err(format!("negative voltage {}", self.v_meas));
        }
        if !(self.i_meas >= T::zero()) {
            return Err(format!("negative current {}", self.i_meas));
        }
        if !self.t_meas.is_finite() {
            return Err("temperature is not finite".into());
        }
        if let Some(g) = self.g_meas {
            if !(g >= T::zero() && g <= T::lit(1500.0)) {
                return Err(format!("irradiance {g} outside [0, 1500]"));
            }
        }
        Ok(())
    }
}

/// Joint voltage/current floor below which a sample is treated as dark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarkThresholds {
    /// V
    pub v: f64,
    /// A
    pub i: f64,
}

impl Default for DarkThresholds {
    fn default() -> Self {
        Self { v: 1.0, i: 0.5 }
    }
}

impl DarkThresholds {
    pub fn is_dark<T: Scalar>(&self, m: &Measurement<T>) -> bool {
        m.v_meas < T::lit(self.v) && m.i_meas < T::lit(self.i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Converged,
    Degenerate,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrradianceEstimate<T = f64> {
    /// W/m²
    pub g_equiv: T,
    /// |f₁| at `g_equiv` (V).
    pub residual: T,
    pub status: EstimateStatus,
}

/// |f₁(G)| for the sample, or the infeasibility penalty.
///
/// The photocurrent grows with G, so infeasible samples are infeasible on
/// a whole interval [0, G_min). The penalty decreases with G there, which
/// steers a swarm that started entirely below G_min upwards.
pub fn stage1_objective<T: Scalar>(
    meas: &Measurement<T>,
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    g: T,
) -> T {
    match kcl_residual(params, plant, &EnvInputs::new(g, meas.t_meas), meas.v_meas, meas.i_meas) {
        Ok(r) if r.is_finite() => r.abs(),
        _ => T::lit(INFEASIBLE_PENALTY) * (T::one() + T::one() / (T::one() + g.abs())),
    }
}

/// Equivalent irradiance with the default dark thresholds.
pub fn estimate_equivalent_irradiance<T: Scalar>(
    meas: &Measurement<T>,
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    bounds: (T, T),
    pso_cfg: &PsoConfig,
    seed: u64,
) -> IrradianceEstimate<T> {
    estimate_with_thresholds(meas, params, plant, bounds, pso_cfg, seed, &DarkThresholds::default())
}

/// Equivalent irradiance; never fails, the outcome is carried in `status`.
///
/// A sample whose current exceeds what the model can deliver anywhere in the
/// interval is reported as [`EstimateStatus::Infeasible`] at the upper
/// bound, the closest irradiance available. An invalid interval or swarm
/// configuration is reported the same way.
pub fn estimate_with_thresholds<T: Scalar>(
    meas: &Measurement<T>,
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    bounds: (T, T),
    pso_cfg: &PsoConfig,
    seed: u64,
    dark: &DarkThresholds,
) -> IrradianceEstimate<T> {
    let (lo, hi) = bounds;
    if dark.is_dark(meas) {
        return IrradianceEstimate {
            g_equiv: lo,
            residual: stage1_objective(meas, params, plant, lo),
            status: EstimateStatus::Degenerate,
        };
    }
    let infeasible = IrradianceEstimate {
        g_equiv: hi,
        residual: T::lit(INFEASIBLE_PENALTY),
        status: EstimateStatus::Infeasible,
    };
    let Ok(box1) = Bounds::new(vec![lo], vec![hi]) else {
        return infeasible;
    };
    let cfg = PsoConfig { seed, ..pso_cfg.clone() };
    let objective = |x: &[T]| stage1_objective(meas, params, plant, x[0]);
    match minimize(objective, &box1, &cfg) {
        Ok(out) if out.f_best < T::lit(INFEASIBLE_PENALTY) => IrradianceEstimate {
            g_equiv: out.x_best[0],
            residual: out.f_best,
            status: EstimateStatus::Converged,
        },
        _ => infeasible,
    }
}
