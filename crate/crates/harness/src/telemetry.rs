//! Telemetry CSV ingestion and writing.
//!
//! Header `ts,v_pv,i_pv,t_c[,g_meas][,p_pv]`, columns in any order. `ts` is
//! Unix seconds or ISO-8601; a naive ISO timestamp is read as UTC. A missing
//! `p_pv` column means p = v·i; an empty `g_meas` cell means no reading.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::Serialize;

use pvdt_core::Measurement;

use crate::error::{HarnessError, Result};

pub const REQUIRED_COLUMNS: [&str; 4] = ["ts", "v_pv", "i_pv", "t_c"];

/// Interval between consecutive samples that is much longer than usual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub from_ts: f64,
    pub to_ts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    /// Sorted by timestamp.
    pub samples: Vec<Measurement>,
    pub has_g: bool,
    pub has_p: bool,
    pub gaps: Vec<Gap>,
}

impl Telemetry {
    pub fn from_samples(samples: Vec<Measurement>) -> Self {
        let has_g = samples.iter().any(|m| m.g_meas.is_some());
        let gaps = find_gaps(&samples);
        Self { samples, has_g, has_p: true, gaps }
    }
}

pub fn parse_timestamp(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Ok(x) = s.parse::<f64>() {
        return if x.is_finite() { Ok(x) } else { Err(format!("timestamp '{s}' is not finite")) };
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let dt = dt.and_utc();
            return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    Err(format!("cannot parse timestamp '{s}'"))
}

pub fn load_telemetry(path: &Path) -> Result<Telemetry> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_telemetry(file)
}

pub fn read_telemetry<R: Read>(reader: R) -> Result<Telemetry> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 4];
    for (k, name) in REQUIRED_COLUMNS.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| HarnessError::Schema(format!("missing column '{name}'")))?;
    }
    let g_col = col("g_meas");
    let p_col = col("p_pv");

    let mut samples = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| HarnessError::Parse { line, message };
        let field = |k: usize| row.get(k).unwrap_or("");
        let num = |k: usize, name: &str| {
            field(k).parse::<f64>().map_err(|_| err(format!("{name}: cannot parse '{}'", field(k))))
        };
        let ts = parse_timestamp(field(idx[0])).map_err(err)?;
        let mut m = Measurement::new(ts, num(idx[1], "v_pv")?, num(idx[2], "i_pv")?, num(idx[3], "t_c")?);
        if let Some(k) = g_col {
            if !field(k).is_empty() {
                m.g_meas = Some(num(k, "g_meas")?);
            }
        }
        if let Some(k) = p_col {
            m.p_meas = num(k, "p_pv")?;
        }
        m.validate().map_err(err)?;
        samples.push(m);
    }
    samples.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    let gaps = find_gaps(&samples);
    Ok(Telemetry { has_g: g_col.is_some(), has_p: p_col.is_some(), samples, gaps })
}

/// Intervals longer than twice the median sampling interval.
pub fn find_gaps(samples: &[Measurement]) -> Vec<Gap> {
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].ts - w[0].ts).filter(|d| *d > 0.0).collect();
    if dts.is_empty() {
        return Vec::new();
    }
    dts.sort_by(f64::total_cmp);
    let median = dts[dts.len() / 2];
    samples
        .windows(2)
        .filter(|w| w[1].ts - w[0].ts > 2.0 * median)
        .map(|w| Gap { from_ts: w[0].ts, to_ts: w[1].ts })
        .collect()
}

pub fn write_telemetry<W: Write>(writer: W, samples: &[Measurement], with_g: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if with_g {
        w.write_record(["ts", "v_pv", "i_pv", "t_c", "g_meas", "p_pv"])?;
    } else {
        w.write_record(["ts", "v_pv", "i_pv", "t_c", "p_pv"])?;
    }
    for m in samples {
        let mut row = vec![m.ts.to_string(), m.v_meas.to_string(), m.i_meas.to_string(), m.t_meas.to_string()];
        if with_g {
            row.push(m.g_meas.map(|g| g.to_string()).unwrap_or_default());
        }
        row.push(m.p_meas.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<telemetry>", e))?;
    Ok(())
}

pub fn save_telemetry(path: &Path, samples: &[Measurement], with_g: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_telemetry(std::io::BufWriter::new(file), samples, with_g)
}
