//! Telemetry ingestion, synthetic plants, stream replay of the estimation
//! methods, and report files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod formats;
pub mod replay;
pub mod report;
pub mod resample;
pub mod sweep;
pub mod synth;
pub mod telemetry;
pub mod tracker;

pub use config::{Method, RunConfig};
pub use error::{HarnessError, Result};
pub use replay::{replay, ReplayOutput, ReplayRecord, UpdateRecord};
pub use report::{write_run, Summary};
pub use telemetry::Telemetry;
