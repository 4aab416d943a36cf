//! Time-stepped replay of a telemetry stream under one estimation method.
//!
//! Every step is scored before any update: the prediction uses the
//! parameters in force when the sample arrives. An update triggered by the
//! sample only affects later steps.

use serde::Serialize;

use pvdt_core::irradiance::estimate_with_thresholds;
use pvdt_core::metrics::relative_errors;
use pvdt_core::pso::derive_seed;
use pvdt_core::{
    co_optimize, compute_error_report, fit_at_irradiance, mpp_point, should_update, tri, EnvInputs, ErrorReport,
    EstimateStatus, Measurement, OperatingPoint, PvParams, UpdateEvent, UpdatePolicy, ALL_FREE,
};

use crate::config::{Method, RunConfig};
use crate::error::{HarnessError, Result};
use crate::resample::resample;
use crate::telemetry::{Gap, Telemetry};
use crate::tracker::update_transient;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayRecord {
    pub ts: f64,
    pub meas: Measurement,
    pub daylight: bool,
    /// Daylight sample that entered prediction, metrics and fitting; false
    /// for dark samples and for daylight samples with a zero channel.
    pub scored: bool,
    /// Irradiance driving the prediction: measured or estimated.
    pub g_used: Option<f64>,
    /// Parameters in force for the prediction.
    pub params: PvParams,
    pub predicted: Option<OperatingPoint>,
    /// Relative errors (fractions).
    pub err_i: Option<f64>,
    pub err_v: Option<f64>,
    pub err_p: Option<f64>,
    pub update: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub event: UpdateEvent,
    /// Tier of the co-optimization; none for fixed-irradiance refits.
    pub tier: Option<u8>,
    /// Irradiance the new parameters were fitted at.
    pub g_fit: f64,
    pub f2: f64,
    /// TRI (%) of the simulated tracker transient after the switch.
    pub tri: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReplayStats {
    pub input_samples: usize,
    pub dropped_samples: usize,
    pub empty_slots: usize,
    pub gaps: Vec<Gap>,
    pub steps: usize,
    pub daylight_steps: usize,
    /// Daylight steps skipped because a channel read zero.
    pub unscored_steps: usize,
    /// Stage-1 estimates that hit the edge of the irradiance interval.
    pub infeasible_estimates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    pub method: Method,
    pub policy: UpdatePolicy,
    pub records: Vec<ReplayRecord>,
    pub updates: Vec<UpdateRecord>,
    /// None when no daylight step was scored.
    pub report: Option<ErrorReport>,
    pub stats: ReplayStats,
    pub final_params: PvParams,
}

impl ReplayOutput {
    pub fn update_count(&self) -> usize {
        self.updates.len()
    }

    pub fn tier1_count(&self) -> usize {
        self.updates.iter().filter(|u| u.tier == Some(1)).count()
    }
}

/// Replays `telemetry` from the parameters `warm`.
pub fn replay(cfg: &RunConfig, telemetry: &Telemetry, warm: &PvParams) -> Result<ReplayOutput> {
    cfg.validate()?;
    let method = cfg.method;
    if method.needs_g_meas() && !telemetry.has_g {
        return Err(HarnessError::Config(format!("method {method} needs a g_meas column")));
    }
    let windowed: Vec<Measurement> = telemetry
        .samples
        .iter()
        .filter(|m| cfg.window_start.is_none_or(|a| m.ts >= a) && cfg.window_end.is_none_or(|b| m.ts < b))
        .copied()
        .collect();
    let rs = resample(&windowed, cfg.resample_s);
    let mut stats = ReplayStats {
        input_samples: windowed.len(),
        dropped_samples: rs.dropped,
        empty_slots: rs.empty_slots,
        gaps: telemetry.gaps.clone(),
        steps: rs.samples.len(),
        ..ReplayStats::default()
    };

    let plant = &cfg.plant;
    let dark = &cfg.coopt.dark;
    let x1 = cfg.coopt.x1_bounds;
    let mut incumbent = cfg.coopt.x2_bounds.clamp(warm);
    let mut last_update: Option<f64> = None;
    let mut records = Vec::with_capacity(rs.samples.len());
    let mut updates = Vec::new();
    let mut pairs = Vec::new();

    for (k, raw) in rs.samples.iter().enumerate() {
        let step_seed = derive_seed(cfg.seed, k as u64);
        let params = incumbent;
        let mut rec = ReplayRecord {
            ts: raw.ts,
            meas: *raw,
            daylight: !dark.is_dark(raw),
            scored: false,
            g_used: None,
            params,
            predicted: None,
            err_i: None,
            err_v: None,
            err_p: None,
            update: false,
        };
        if !rec.daylight {
            records.push(rec);
            continue;
        }
        stats.daylight_steps += 1;
        if raw.v_meas <= 0.0 || raw.i_meas <= 0.0 {
            stats.unscored_steps += 1;
            records.push(rec);
            continue;
        }
        rec.scored = true;
        // methods that estimate irradiance never see the sensor column
        let blind = Measurement { g_meas: None, ..*raw };
        let g = if method.needs_g_meas() {
            raw.g_meas.ok_or_else(|| HarnessError::Config(format!("g_meas missing at ts = {}", raw.ts)))?
        } else {
            let e = estimate_with_thresholds(&blind, &params, plant, x1, &cfg.coopt.stage1, derive_seed(step_seed, 0), dark);
            if e.status == EstimateStatus::Infeasible {
                stats.infeasible_estimates += 1;
            }
            e.g_equiv
        };
        let env = EnvInputs::new(g, raw.t_meas);
        let pred = mpp_point(&params, plant, &env).unwrap_or(OperatingPoint::zero());
        let rel = relative_errors(raw, &pred, dark);
        rec.g_used = Some(g);
        rec.predicted = Some(pred);
        rec.err_i = Some(rel.i);
        rec.err_v = Some(rel.v);
        rec.err_p = Some((raw.p_meas - pred.p).abs() / raw.p_meas.abs().max(dark.i * dark.v));
        pairs.push((*raw, pred));

        let last = *last_update.get_or_insert(raw.ts);
        if method.updates() && should_update(&cfg.policy, raw.ts, last, raw, &pred, dark) {
            let (new, tier, g_fit, f2) = match method {
                Method::Proposed => {
                    let r = co_optimize(&blind, &params, plant, &cfg.coopt, derive_seed(step_seed, 1))?;
                    (r.params, Some(r.tier_used), r.g_equiv, r.f2_value)
                }
                _ => {
                    let (p, f) = fit_at_irradiance(raw, g, &params, plant, &cfg.coopt, ALL_FREE, derive_seed(step_seed, 1))?;
                    (p, None, g, f)
                }
            };
            let tri_value = if cfg.transients {
                let w = update_transient((&params, &env), (&new, &EnvInputs::new(g_fit, raw.t_meas)), plant, &cfg.transient);
                tri(&w, cfg.ss_tail_fraction).ok()
            } else {
                None
            };
            updates.push(UpdateRecord {
                event: UpdateEvent {
                    ts: raw.ts,
                    prev_params: params,
                    new_params: new,
                    trigger_error_i: rel.i,
                    trigger_error_v: rel.v,
                },
                tier,
                g_fit,
                f2,
                tri: tri_value,
            });
            rec.update = true;
            incumbent = new;
            last_update = Some(raw.ts);
        }
        records.push(rec);
    }

    let report = match compute_error_report(&pairs) {
        Ok(r) => Some(r),
        Err(pvdt_core::MetricsError::EmptyInput) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(ReplayOutput { method, policy: cfg.policy, records, updates, report, stats, final_params: incumbent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_plant, Scenario, SensorModel, SynthConfig};

    fn stream(noise: f64, duration_s: f64) -> Telemetry {
        let cfg = SynthConfig { scenario: Scenario::Cloudy, noise, duration_s, seed: 3, ..SynthConfig::default() };
        Telemetry::from_samples(synth_plant(&cfg).unwrap().samples)
    }

    #[test]
    fn fixed_point_needs_no_update() {
        let t = stream(0.0, 1800.0);
        let out = replay(&RunConfig::default(), &t, &PvParams::DATASHEET_OPT).unwrap();
        assert_eq!(out.records.len(), 180);
        assert_eq!(out.update_count(), 0);
        let r = out.report.unwrap();
        assert!(r.mape_i() < 1e-3 && r.mape_v() < 1e-3 && r.mape_p() < 1e-3, "{r:?}");
    }

    #[test]
    fn update_flags_match_events() {
        let t = stream(0.005, 1200.0);
        let cfg = RunConfig { policy: UpdatePolicy::FixedInterval { interval_s: 60.0 }, ..RunConfig::default() };
        let out = replay(&cfg, &t, &PvParams::DATASHEET_OPT).unwrap();
        assert_eq!(out.records.iter().filter(|r| r.update).count(), out.update_count());
        assert_eq!(out.update_count(), 119 / 6);
    }

    #[test]
    fn sensor_methods_need_the_column() {
        let cfg = SynthConfig { sensor: SensorModel::None, duration_s: 100.0, ..SynthConfig::default() };
        let t = Telemetry::from_samples(synth_plant(&cfg).unwrap().samples);
        for m in [Method::Base, Method::Method2] {
            let rc = RunConfig { method: m, ..RunConfig::default() };
            assert!(matches!(replay(&rc, &t, &PvParams::DATASHEET_OPT), Err(HarnessError::Config(_))));
        }
        for m in [Method::Method1, Method::Proposed] {
            let rc = RunConfig { method: m, ..RunConfig::default() };
            assert!(replay(&rc, &t, &PvParams::DATASHEET_OPT).is_ok());
        }
    }

    #[test]
    fn dark_stream_has_no_report() {
        let samples = (0..30).map(|k| Measurement::new(f64::from(k), 0.0, 0.0, 10.0)).collect();
        let out = replay(&RunConfig::default(), &Telemetry::from_samples(samples), &PvParams::DATASHEET_OPT).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.records.iter().all(|r| !r.daylight));
        assert!(out.report.is_none());
    }
}
