//! Report files of one replay: per-step records, update events, a JSON
//! summary and plot-data tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pvdt_core::sd_model::PARAM_NAMES;
use pvdt_core::{ErrorReport, PvParams};

use crate::config::{Method, RunConfig};
use crate::error::{HarnessError, Result};
use crate::formats::save_json;
use crate::replay::ReplayOutput;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Series-resistance range outside which fitted values are flagged.
pub const RS_SANITY_RANGE: (f64, f64) = (0.5, 9.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub input_samples: usize,
    pub dropped_samples: usize,
    pub empty_slots: usize,
    pub gaps: usize,
    pub steps: usize,
    pub daylight_steps: usize,
    pub scored_steps: usize,
    pub infeasible_estimates: usize,
    pub updates: usize,
    pub tier1_updates: usize,
    pub tier2_updates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriSummary {
    pub n: usize,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sanity {
    pub rs_range: (f64, f64),
    /// Updates whose new rs lies outside `rs_range`.
    pub rs_outside_range: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub method: Method,
    pub policy: String,
    pub resample_s: f64,
    pub seed: u64,
    pub counts: Counts,
    /// Null when no daylight step was scored.
    pub metrics: Option<ErrorReport>,
    pub transient_tri: Option<TriSummary>,
    pub sanity: Sanity,
    pub final_params: PvParams,
}

impl Summary {
    pub fn new(cfg: &RunConfig, out: &ReplayOutput) -> Self {
        let s = &out.stats;
        let tris: Vec<f64> = out.updates.iter().filter_map(|u| u.tri).collect();
        let transient_tri = (!tris.is_empty()).then(|| TriSummary {
            n: tris.len(),
            mean: tris.iter().sum::<f64>() / tris.len() as f64,
            max: tris.iter().copied().fold(0.0, f64::max),
        });
        let (lo, hi) = RS_SANITY_RANGE;
        Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            method: out.method,
            policy: out.policy.to_string(),
            resample_s: cfg.resample_s,
            seed: cfg.seed,
            counts: Counts {
                input_samples: s.input_samples,
                dropped_samples: s.dropped_samples,
                empty_slots: s.empty_slots,
                gaps: s.gaps.len(),
                steps: s.steps,
                daylight_steps: s.daylight_steps,
                scored_steps: out.records.iter().filter(|r| r.scored).count(),
                infeasible_estimates: s.infeasible_estimates,
                updates: out.update_count(),
                tier1_updates: out.tier1_count(),
                tier2_updates: out.updates.iter().filter(|u| u.tier == Some(2)).count(),
            },
            metrics: out.report,
            transient_tri,
            sanity: Sanity {
                rs_range: RS_SANITY_RANGE,
                rs_outside_range: out.updates.iter().filter(|u| !(lo..=hi).contains(&u.event.new_params.rs)).count(),
            },
            final_params: out.final_params,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_none()
    }
}

fn require<'a>(v: &'a Value, path: &str, key: &str) -> Result<&'a Value, String> {
    v.get(key).ok_or_else(|| format!("{path}: missing '{key}'"))
}

fn number(v: &Value, path: &str, key: &str) -> Result<f64, String> {
    let x = require(v, path, key)?.as_f64().ok_or_else(|| format!("{path}.{key}: not a number"))?;
    if x < 0.0 && key != "seed" {
        return Err(format!("{path}.{key}: negative"));
    }
    Ok(x)
}

/// Structural check of a summary document.
pub fn validate_summary(v: &Value) -> Result<(), String> {
    if number(v, "$", "schema_version")? as u32 != SUMMARY_SCHEMA_VERSION {
        return Err("unsupported schema_version".into());
    }
    let method = require(v, "$", "method")?.as_str().ok_or("$.method: not a string")?;
    if !Method::ALL.iter().any(|m| m.name() == method) {
        return Err(format!("$.method: unknown '{method}'"));
    }
    require(v, "$", "policy")?.as_str().ok_or("$.policy: not a string")?;
    number(v, "$", "resample_s")?;
    number(v, "$", "seed")?;
    let counts = require(v, "$", "counts")?;
    for key in [
        "input_samples",
        "dropped_samples",
        "empty_slots",
        "gaps",
        "steps",
        "daylight_steps",
        "scored_steps",
        "infeasible_estimates",
        "updates",
        "tier1_updates",
        "tier2_updates",
    ] {
        number(counts, "$.counts", key)?;
    }
    match require(v, "$", "metrics")? {
        Value::Null => {}
        m => {
            number(m, "$.metrics", "n")?;
            for ch in ["i", "v", "p"] {
                let c = require(m, "$.metrics", ch)?;
                let path = format!("$.metrics.{ch}");
                let (lo, mean, hi) =
                    (number(c, &path, "min_ape")?, number(c, &path, "mape")?, number(c, &path, "max_ape")?);
                number(c, &path, "rmse")?;
                if !(lo <= mean && mean <= hi) {
                    return Err(format!("{path}: min ≤ mean ≤ max violated"));
                }
            }
        }
    }
    match require(v, "$", "transient_tri")? {
        Value::Null => {}
        t => {
            for key in ["n", "mean", "max"] {
                number(t, "$.transient_tri", key)?;
            }
        }
    }
    let sanity = require(v, "$", "sanity")?;
    number(sanity, "$.sanity", "rs_outside_range")?;
    let params = require(v, "$", "final_params")?;
    for name in PARAM_NAMES {
        number(params, "$.final_params", name)?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn params_cells(p: &PvParams) -> impl Iterator<Item = String> {
    p.to_array().into_iter().map(|x| x.to_string())
}

fn write_records(path: &Path, out: &ReplayOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["ts", "v_meas", "i_meas", "t_meas", "g_meas", "p_meas", "daylight", "scored", "g_used"];
    header.extend(PARAM_NAMES);
    header.extend(["v_pred", "i_pred", "p_pred", "err_i", "err_v", "err_p", "update"]);
    w.write_record(&header)?;
    for r in &out.records {
        let m = &r.meas;
        let mut row = vec![
            r.ts.to_string(),
            m.v_meas.to_string(),
            m.i_meas.to_string(),
            m.t_meas.to_string(),
            opt(m.g_meas),
            m.p_meas.to_string(),
            u8::from(r.daylight).to_string(),
            u8::from(r.scored).to_string(),
            opt(r.g_used),
        ];
        row.extend(params_cells(&r.params));
        row.extend([
            opt(r.predicted.map(|p| p.v)),
            opt(r.predicted.map(|p| p.i)),
            opt(r.predicted.map(|p| p.p)),
            opt(r.err_i),
            opt(r.err_v),
            opt(r.err_p),
            u8::from(r.update).to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_events(path: &Path, out: &ReplayOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["ts".to_string()];
    header.extend(PARAM_NAMES.iter().map(|n| format!("prev_{n}")));
    header.extend(PARAM_NAMES.iter().map(|n| format!("new_{n}")));
    header.extend(["trigger_error_i", "trigger_error_v", "tier", "g_fit", "f2", "tri"].map(String::from));
    w.write_record(&header)?;
    for u in &out.updates {
        let e = &u.event;
        let mut row = vec![e.ts.to_string()];
        row.extend(params_cells(&e.prev_params));
        row.extend(params_cells(&e.new_params));
        row.extend([
            e.trigger_error_i.to_string(),
            e.trigger_error_v.to_string(),
            u.tier.map(|t| t.to_string()).unwrap_or_default(),
            u.g_fit.to_string(),
            u.f2.to_string(),
            opt(u.tri),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Measured against predicted power, current, voltage and irradiance.
fn write_timeseries(path: &Path, out: &ReplayOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ts", "p_meas", "p_pred", "i_meas", "i_pred", "v_meas", "v_pred", "g_meas", "g_used"])?;
    for r in out.records.iter().filter(|r| r.scored) {
        let m = &r.meas;
        w.write_record([
            r.ts.to_string(),
            m.p_meas.to_string(),
            opt(r.predicted.map(|p| p.p)),
            m.i_meas.to_string(),
            opt(r.predicted.map(|p| p.i)),
            m.v_meas.to_string(),
            opt(r.predicted.map(|p| p.v)),
            opt(m.g_meas),
            opt(r.g_used),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub const HISTOGRAM_BINS: usize = 20;

/// Distribution of each parameter over the scored steps (the parameters
/// in force at each step).
fn write_param_histogram(path: &Path, out: &ReplayOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["param", "bin_lower", "bin_upper", "count"])?;
    let rows: Vec<[f64; 5]> = out.records.iter().filter(|r| r.scored).map(|r| r.params.to_array()).collect();
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        if xs.is_empty() {
            continue;
        }
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            w.write_record([name.to_string(), lo.to_string(), hi.to_string(), xs.len().to_string()])?;
            continue;
        }
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut counts = [0usize; HISTOGRAM_BINS];
        for x in &xs {
            counts[(((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let z = if b + 1 == HISTOGRAM_BINS { hi } else { lo + (b + 1) as f64 * width };
            w.write_record([name.to_string(), a.to_string(), z.to_string(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Hourly mean absolute percentage errors.
fn write_hourly_errors(path: &Path, out: &ReplayOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hour_start_ts", "n", "mape_i", "mape_v", "mape_p", "updates"])?;
    let mut current: Option<(f64, usize, [f64; 3], usize)> = None;
    let flush = |w: &mut csv::Writer<fs::File>, c: Option<(f64, usize, [f64; 3], usize)>| -> Result<()> {
        if let Some((h, n, s, u)) = c {
            let nf = n as f64;
            w.write_record([
                h.to_string(),
                n.to_string(),
                (100.0 * s[0] / nf).to_string(),
                (100.0 * s[1] / nf).to_string(),
                (100.0 * s[2] / nf).to_string(),
                u.to_string(),
            ])?;
        }
        Ok(())
    };
    for r in out.records.iter().filter(|r| r.scored) {
        let hour = (r.ts / 3600.0).floor() * 3600.0;
        if current.is_some_and(|c| c.0 != hour) {
            flush(&mut w, current.take())?;
        }
        let c = current.get_or_insert((hour, 0, [0.0; 3], 0));
        c.1 += 1;
        c.2[0] += r.err_i.unwrap_or(0.0);
        c.2[1] += r.err_v.unwrap_or(0.0);
        c.2[2] += r.err_p.unwrap_or(0.0);
        c.3 += usize::from(r.update);
    }
    flush(&mut w, current)?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub const RECORDS_FILE: &str = "records.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes every report file of one run into `dir` and returns the summary.
pub fn write_run(dir: &Path, cfg: &RunConfig, out: &ReplayOutput) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_records(&dir.join(RECORDS_FILE), out)?;
    write_events(&dir.join(EVENTS_FILE), out)?;
    write_timeseries(&dir.join("plot_timeseries.csv"), out)?;
    write_param_histogram(&dir.join("plot_param_histogram.csv"), out)?;
    write_hourly_errors(&dir.join("plot_hourly_errors.csv"), out)?;
    let summary = Summary::new(cfg, out);
    save_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// One row per run, as in a comparison table.
pub fn write_summary_table(path: &Path, rows: &[(String, Summary)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label", "method", "policy", "scored_steps", "updates", "tier1_updates"];
    for ch in ["i", "v", "p"] {
        header.extend(match ch {
            "i" => ["mape_i", "min_ape_i", "max_ape_i", "rmse_i"],
            "v" => ["mape_v", "min_ape_v", "max_ape_v", "rmse_v"],
            _ => ["mape_p", "min_ape_p", "max_ape_p", "rmse_p"],
        });
    }
    header.extend(["tri_mean", "tri_max"]);
    w.write_record(&header)?;
    for (label, s) in rows {
        let mut row = vec![
            label.clone(),
            s.method.to_string(),
            s.policy.clone(),
            s.counts.scored_steps.to_string(),
            s.counts.updates.to_string(),
            s.counts.tier1_updates.to_string(),
        ];
        match &s.metrics {
            Some(m) => {
                for c in [m.i, m.v, m.p] {
                    row.extend([c.mape, c.min_ape, c.max_ape, c.rmse].map(|x| x.to_string()));
                }
            }
            None => row.extend(std::iter::repeat_n(String::new(), 12)),
        }
        row.push(opt(s.transient_tri.map(|t| t.mean)));
        row.push(opt(s.transient_tri.map(|t| t.max)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::replay;
    use crate::synth::{synth_plant, SynthConfig};
    use crate::telemetry::Telemetry;
    use pvdt_core::Measurement;

    fn short_run(samples: Vec<Measurement>) -> (RunConfig, ReplayOutput) {
        let cfg = RunConfig { policy: "fixed:60".parse().unwrap(), ..RunConfig::default() };
        let out = replay(&cfg, &Telemetry::from_samples(samples), &PvParams::DATASHEET_OPT).unwrap();
        (cfg, out)
    }

    #[test]
    fn summary_round_trips_through_validator() {
        let s = synth_plant(&SynthConfig { duration_s: 300.0, ..SynthConfig::default() }).unwrap();
        let (cfg, out) = short_run(s.samples);
        let dir = tempfile::tempdir().unwrap();
        let summary = write_run(dir.path(), &cfg, &out).unwrap();
        let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        validate_summary(&value).unwrap();
        let back: Summary = serde_json::from_value(value).unwrap();
        assert_eq!(back, summary);
        assert_eq!(summary.counts.updates, 4);
    }

    #[test]
    fn empty_daylight_gives_null_metrics() {
        let dark = (0..100).map(|k| Measurement::new(f64::from(k), 0.0, 0.0, 5.0)).collect();
        let (cfg, out) = short_run(dark);
        let dir = tempfile::tempdir().unwrap();
        let summary = write_run(dir.path(), &cfg, &out).unwrap();
        assert!(summary.is_empty());
        let value: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(value["metrics"], Value::Null);
        validate_summary(&value).unwrap();
    }

    #[test]
    fn validator_rejects_broken_documents() {
        let s = synth_plant(&SynthConfig { duration_s: 100.0, ..SynthConfig::default() }).unwrap();
        let (cfg, out) = short_run(s.samples);
        let good = serde_json::to_value(Summary::new(&cfg, &out)).unwrap();
        let mut missing = good.clone();
        missing.as_object_mut().unwrap().remove("counts");
        assert!(validate_summary(&missing).is_err());
        let mut inverted = good.clone();
        inverted["metrics"]["i"]["min_ape"] = Value::from(1e9);
        assert!(validate_summary(&inverted).is_err());
        let mut method = good;
        method["method"] = Value::from("oracle");
        assert!(validate_summary(&method).is_err());
    }
}
