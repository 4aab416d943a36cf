//! Batches of replays over update policies or estimation methods.

use rayon::prelude::*;

use pvdt_core::schedule::{DEFAULT_EVENT_THRESHOLD, DEFAULT_INTERVALS};
use pvdt_core::{PvParams, UpdatePolicy};

use crate::config::{Method, RunConfig};
use crate::error::Result;
use crate::replay::{replay, ReplayOutput};
use crate::telemetry::Telemetry;

/// Replay outputs paired with the configuration that produced them.
pub type Runs = Vec<(RunConfig, ReplayOutput)>;

/// Fixed intervals from 10 s to one hour, then the event trigger (with the
/// configured threshold when the config already uses one).
pub fn sweep_policy_set(cfg: &RunConfig) -> Vec<UpdatePolicy> {
    let threshold = match cfg.policy {
        UpdatePolicy::EventTrigger { threshold } => threshold,
        UpdatePolicy::FixedInterval { .. } => DEFAULT_EVENT_THRESHOLD,
    };
    DEFAULT_INTERVALS
        .iter()
        .map(|&s| UpdatePolicy::FixedInterval { interval_s: f64::from(s) })
        .chain(std::iter::once(UpdatePolicy::EventTrigger { threshold }))
        .collect()
}

/// Replays under each policy. Runs are independent and execute in
/// parallel; results keep the order of `policies`.
pub fn sweep_policies(
    cfg: &RunConfig,
    telemetry: &Telemetry,
    warm: &PvParams,
    policies: &[UpdatePolicy],
) -> Result<Runs> {
    policies
        .par_iter()
        .map(|p| {
            let c = RunConfig { policy: *p, ..cfg.clone() };
            replay(&c, telemetry, warm).map(|o| (c, o))
        })
        .collect()
}

/// Replays every method the telemetry supports. Returns the runs and the
/// methods skipped for lack of a `g_meas` column.
pub fn compare_methods(
    cfg: &RunConfig,
    telemetry: &Telemetry,
    warm: &PvParams,
) -> Result<(Runs, Vec<Method>)> {
    let (run, skipped): (Vec<Method>, Vec<Method>) =
        Method::ALL.iter().partition(|m| telemetry.has_g || !m.needs_g_meas());
    let outs = run
        .par_iter()
        .map(|m| {
            let c = RunConfig { method: *m, ..cfg.clone() };
            replay(&c, telemetry, warm).map(|o| (c, o))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((outs, skipped))
}
