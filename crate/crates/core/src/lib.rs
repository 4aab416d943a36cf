//! Real-time parameterization of photovoltaic digital twins.
//!
//! A lumped single-diode model predicts the maximum power point from five
//! parameters, an irradiance and a temperature. From telemetry samples
//! (voltage, current, temperature) the crate estimates an equivalent
//! irradiance, refits the parameters with a two-stage particle swarm, and
//! decides when a refit should be pushed to the twin.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that do not care.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasheet;
pub mod error;
pub mod irradiance;
pub mod lambert;
pub mod metrics;
pub mod param_space;
pub mod pso;
pub mod scalar;
pub mod schedule;
pub mod sd_model;
pub mod two_stage;

pub use datasheet::{fit_datasheet, CurvePoint, DatasheetFit};
pub use error::{ConfigError, FitError, MetricsError, ModelError};
pub use irradiance::{estimate_equivalent_irradiance, DarkThresholds, EstimateStatus, IrradianceEstimate, Measurement};
pub use lambert::lambert_w0;
pub use metrics::{compute_error_report, relative_errors, tri, ErrorReport};
pub use param_space::{FreeMask, ParamBounds, ALL_FREE, RESISTANCES_ONLY};
pub use pso::{minimize, Bounds, PsoConfig, PsoOutcome};
pub use scalar::Scalar;
pub use schedule::{should_update, UpdateEvent, UpdatePolicy};
pub use sd_model::{
    current_at_voltage, derive_quantities, kcl_residual, mpp_point, EnvInputs, OperatingPoint, PlantConstants,
    PvParams,
};
pub use two_stage::{co_optimize, fit_at_irradiance, stage2_objective, CoOptConfig, CoOptResult};

pub type PvParamsF64 = PvParams<f64>;
pub type PvParamsF32 = PvParams<f32>;
pub type PlantConstantsF64 = PlantConstants<f64>;
pub type PlantConstantsF32 = PlantConstants<f32>;
pub type MeasurementF64 = Measurement<f64>;
pub type MeasurementF32 = Measurement<f32>;
pub type OperatingPointF64 = OperatingPoint<f64>;
pub type OperatingPointF32 = OperatingPoint<f32>;
pub type CurvePointF64 = CurvePoint<f64>;
pub type CoOptResultF64 = CoOptResult<f64>;
