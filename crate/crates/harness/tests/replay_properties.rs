use proptest::prelude::*;

use pvdt_core::{tri, EnvInputs, Measurement, PlantConstants, PvParams, UpdatePolicy};
use pvdt_harness::resample::resample;
use pvdt_harness::synth::{synth_plant, DriftKeyframe, Scenario, SynthConfig};
use pvdt_harness::tracker::{update_transient, TransientConfig};
use pvdt_harness::{replay, Method, RunConfig, Telemetry};

const X2: PvParams = PvParams::DATASHEET_OPT;

/// Brute-force selection: for each boundary, the earliest sample in
/// [boundary, boundary + Δ).
fn resample_oracle(ts: &[f64], step: f64) -> Vec<f64> {
    let t0 = ts[0];
    let last = ts[ts.len() - 1];
    let mut out = Vec::new();
    let mut k = 0.0;
    while t0 + k * step <= last {
        let b = t0 + k * step;
        if let Some(t) = ts.iter().copied().filter(|t| *t >= b && *t < b + step).reduce(f64::min) {
            out.push(t);
        }
        k += 1.0;
    }
    out
}

proptest! {
    #[test]
    fn resample_matches_oracle(deltas in prop::collection::vec(0.05..7.0f64, 1..300), step in 1.0..30.0f64) {
        let mut ts = vec![0.0];
        for d in &deltas {
            ts.push(ts[ts.len() - 1] + d);
        }
        let stream: Vec<Measurement> = ts.iter().map(|t| Measurement::new(*t, 30.0, 8.0, 25.0)).collect();
        let got: Vec<f64> = resample(&stream, step).samples.iter().map(|m| m.ts).collect();
        prop_assert_eq!(got, resample_oracle(&ts, step));
    }
}

fn telemetry(cfg: &SynthConfig) -> Telemetry {
    Telemetry::from_samples(synth_plant(cfg).unwrap().samples)
}

#[test]
fn estimating_methods_never_read_the_sensor() {
    let with = SynthConfig { duration_s: 1200.0, noise: 0.002, seed: 8, ..SynthConfig::default() };
    let a = telemetry(&with);
    let b = Telemetry::from_samples(a.samples.iter().map(|m| Measurement { g_meas: None, ..*m }).collect());
    assert!(a.has_g && !b.has_g);
    for m in [Method::Method1, Method::Proposed] {
        let cfg = RunConfig { method: m, ..RunConfig::default() };
        let ra = replay(&cfg, &a, &X2).unwrap();
        let rb = replay(&cfg, &b, &X2).unwrap();
        assert_eq!(ra.updates, rb.updates);
        assert_eq!(ra.report, rb.report);
        for (x, y) in ra.records.iter().zip(&rb.records) {
            assert_eq!((x.g_used, x.predicted, x.params), (y.g_used, y.predicted, y.params));
        }
    }
}

#[test]
fn mid_run_shift_gives_one_burst() {
    let shifted = PvParams { rs: X2.rs * 1.5, rsh: X2.rsh * 0.8, ..X2 };
    let cfg = SynthConfig {
        noise: 0.0,
        duration_s: 3600.0,
        seed: 4,
        drift: vec![DriftKeyframe { at_s: 1800.0, params: X2 }, DriftKeyframe { at_s: 1800.5, params: shifted }],
        ..SynthConfig::default()
    };
    let tele = telemetry(&cfg);
    let shift_ts = tele.samples[0].ts + 1800.0;
    let out = replay(&RunConfig::default(), &tele, &X2).unwrap();
    assert!(out.update_count() >= 1 && out.update_count() <= 3, "{} updates", out.update_count());
    assert!(out.updates.iter().all(|u| u.event.ts > shift_ts));
    let first = out.updates[0].event.ts;
    assert!(out.updates.iter().all(|u| u.event.ts - first <= 60.0));
}

#[test]
fn event_trigger_bounds_errors_between_updates() {
    let cfg = SynthConfig { noise: 0.001, duration_s: 3600.0, seed: 12, params: PvParams { rs: X2.rs * 1.3, ..X2 }, ..SynthConfig::default() };
    let tele = telemetry(&cfg);
    let event = replay(&RunConfig::default(), &tele, &X2).unwrap();
    let fixed = replay(&RunConfig { policy: UpdatePolicy::FixedInterval { interval_s: 10.0 }, ..RunConfig::default() }, &tele, &X2).unwrap();
    assert!(event.update_count() <= fixed.update_count());
    for r in event.records.iter().filter(|r| r.scored && !r.update) {
        assert!(r.err_i.unwrap() <= 0.005 && r.err_v.unwrap() <= 0.005);
    }
}

#[test]
fn transient_index_shrinks_with_parameter_step() {
    let plant = PlantConstants::default();
    let env = EnvInputs::new(750.0, 30.0);
    let tcfg = TransientConfig::default();
    let values: Vec<f64> = [0.8, 0.4, 0.2, 0.1]
        .iter()
        .map(|d| {
            let new = PvParams { rs: X2.rs * (1.0 + d), rsh: X2.rsh * (1.0 - d / 2.0), ..X2 };
            tri(&update_transient((&X2, &env), (&new, &env), &plant, &tcfg), 0.2).unwrap()
        })
        .collect();
    assert!(values[0] > 0.0);
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}

#[test]
fn clear_day_replay_is_accurate_for_method1_at_the_generating_point() {
    let cfg = SynthConfig { scenario: Scenario::Clear, noise: 0.0, duration_s: 1800.0, ..SynthConfig::default() };
    let out = replay(&RunConfig { method: Method::Method1, ..RunConfig::default() }, &telemetry(&cfg), &X2).unwrap();
    let r = out.report.unwrap();
    assert!(r.mape_i() < 1e-3 && r.mape_v() < 1e-3);
}
