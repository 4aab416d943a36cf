//! Bounds CSV, datasheet-curve CSV and parameter JSON files.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pvdt_core::sd_model::PARAM_NAMES;
use pvdt_core::{CurvePoint, ParamBounds, PvParams};

use crate::error::{HarnessError, Result};

/// Parameter file written by `fit-datasheet`. Loading also accepts a bare
/// parameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub params: PvParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_current_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_power_deviation: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ParamsJson {
    Wrapped(ParamsFile),
    Bare(PvParams),
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HarnessError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<PvParams> {
    let parsed: ParamsJson = serde_json::from_reader(std::io::BufReader::new(open(path)?))?;
    let p = match parsed {
        ParamsJson::Wrapped(f) => f.params,
        ParamsJson::Bare(p) => p,
    };
    p.validate().map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(p)
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Rows `name,lower,upper`, one per parameter, any order.
pub fn read_bounds<R: std::io::Read>(reader: R) -> Result<ParamBounds> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["name", "lower", "upper"] {
        return Err(HarnessError::Schema("bounds header must be name,lower,upper".into()));
    }
    let mut lo = [None; 5];
    let mut hi = [None; 5];
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| HarnessError::Parse { line, message };
        let name = row.get(0).unwrap_or("");
        let k = PARAM_NAMES.iter().position(|n| *n == name).ok_or_else(|| err(format!("unknown parameter '{name}'")))?;
        if lo[k].is_some() {
            return Err(err(format!("duplicate parameter '{name}'")));
        }
        let num = |j: usize| {
            let s = row.get(j).unwrap_or("");
            s.parse::<f64>().map_err(|_| err(format!("cannot parse '{s}'")))
        };
        lo[k] = Some(num(1)?);
        hi[k] = Some(num(2)?);
    }
    let mut l = [0.0; 5];
    let mut h = [0.0; 5];
    for k in 0..5 {
        match (lo[k], hi[k]) {
            (Some(a), Some(b)) => (l[k], h[k]) = (a, b),
            _ => return Err(HarnessError::Schema(format!("missing bounds for '{}'", PARAM_NAMES[k]))),
        }
    }
    let b = ParamBounds { lower: PvParams::from_array(l), upper: PvParams::from_array(h) };
    b.validate()?;
    Ok(b)
}

pub fn load_bounds(path: &Path) -> Result<ParamBounds> {
    read_bounds(open(path)?)
}

pub fn write_bounds<W: std::io::Write>(writer: W, b: &ParamBounds) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "lower", "upper"])?;
    let (lo, hi) = (b.lower.to_array(), b.upper.to_array());
    for k in 0..5 {
        w.write_record([PARAM_NAMES[k].to_string(), lo[k].to_string(), hi[k].to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io("<bounds>", e))?;
    Ok(())
}

/// Rows `v,i,g,t_c`.
pub fn read_curve<R: std::io::Read>(reader: R) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 4];
    for (k, name) in ["v", "i", "g", "t_c"].iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| HarnessError::Schema(format!("curve file: missing column '{name}'")))?;
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut x = [0.0; 4];
        for k in 0..4 {
            let s = row.get(idx[k]).unwrap_or("");
            x[k] = s
                .parse::<f64>()
                .map_err(|_| HarnessError::Parse { line, message: format!("cannot parse '{s}'") })?;
        }
        let p = CurvePoint { v: x[0], i: x[1], g: x[2], t_c: x[3] };
        p.validate().map_err(|e| HarnessError::Parse { line, message: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    read_curve(open(path)?)
}

pub fn write_curve<W: std::io::Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["v", "i", "g", "t_c"])?;
    for p in points {
        w.write_record([p.v.to_string(), p.i.to_string(), p.g.to_string(), p.t_c.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io("<curve>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_round_trip() {
        let b = ParamBounds::default();
        let mut buf = Vec::new();
        write_bounds(&mut buf, &b).unwrap();
        assert_eq!(read_bounds(buf.as_slice()).unwrap(), b);
    }

    #[test]
    fn bounds_missing_row() {
        let e = read_bounds("name,lower,upper\nrs,0.1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, HarnessError::Schema(_)), "{e}");
    }

    #[test]
    fn bounds_inverted_interval() {
        let text = "name,lower,upper\nrs,1,0.1\nrsh,1,2\nkd,1,2\niph0,1,2\nis0,1e-12,1e-6\n";
        assert!(matches!(read_bounds(text.as_bytes()), Err(HarnessError::Config(_))));
    }

    #[test]
    fn params_bare_or_wrapped() {
        let dir = tempfile::tempdir().unwrap();
        let p = PvParams::DATASHEET_OPT;
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_json(&a, &p).unwrap();
        save_json(&b, &ParamsFile { params: p, rmse: Some(1e-9), max_current_deviation: None, max_power_deviation: None })
            .unwrap();
        assert_eq!(load_params(&a).unwrap(), p);
        assert_eq!(load_params(&b).unwrap(), p);
    }

    #[test]
    fn curve_rejects_bad_row() {
        let e = read_curve("v,i,g,t_c\n1,2,1000,25\n1,x,1000,25\n".as_bytes()).unwrap_err();
        assert!(matches!(e, HarnessError::Parse { line: 3, .. }), "{e}");
    }
}
