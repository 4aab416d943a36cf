//! Discrete perturb-and-observe tracking on the model I–V curve.

use serde::{Deserialize, Serialize};

use pvdt_core::sd_model::open_circuit_voltage;
use pvdt_core::{current_at_voltage, mpp_point, EnvInputs, OperatingPoint, PlantConstants, PvParams};

/// Fixed-step hill climber on output power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbObserve {
    pub step_v: f64,
    pub v: f64,
    direction: f64,
    last_p: f64,
}

impl PerturbObserve {
    pub fn new(step_v: f64, v_start: f64) -> Self {
        Self { step_v, v: v_start, direction: 1.0, last_p: f64::NEG_INFINITY }
    }

    /// Operating point at the current voltage, then one perturbation.
    pub fn step(&mut self, params: &PvParams, plant: &PlantConstants, env: &EnvInputs) -> OperatingPoint {
        let voc = open_circuit_voltage(params, plant, env).unwrap_or(0.0);
        let v = self.v.clamp(0.0, voc.max(0.0));
        let i = current_at_voltage(params, plant, env, v).unwrap_or(0.0).max(0.0);
        let op = OperatingPoint::new(v, i);
        if op.p < self.last_p {
            self.direction = -self.direction;
        }
        self.last_p = op.p;
        self.v = v + self.direction * self.step_v;
        op
    }
}

/// Tracker used for the post-update transient windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransientConfig {
    /// Perturbation per module; the plant step is this times ns/72.
    pub step_v_per_module: f64,
    pub rate_hz: f64,
    pub window_s: f64,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self { step_v_per_module: 0.5, rate_hz: 10.0, window_s: 10.0 }
    }
}

impl TransientConfig {
    pub fn plant_step(&self, plant: &PlantConstants) -> f64 {
        self.step_v_per_module * f64::from(plant.ns) / 72.0
    }
}

/// Output power after the twin switches from `old` to `new` parameters.
///
/// The tracker sits at the old MPP voltage when the switch happens and then
/// climbs the new curve; the window holds one power sample per tick.
pub fn update_transient(
    old: (&PvParams, &EnvInputs),
    new: (&PvParams, &EnvInputs),
    plant: &PlantConstants,
    cfg: &TransientConfig,
) -> Vec<f64> {
    let v0 = mpp_point(old.0, plant, old.1).map(|op| op.v).unwrap_or(0.0);
    let mut po = PerturbObserve::new(cfg.plant_step(plant), v0);
    let n = (cfg.window_s * cfg.rate_hz).round().max(1.0) as usize;
    (0..n).map(|_| po.step(new.0, plant, new.1).p).collect()
}
