//! Synthetic plant telemetry at one-second resolution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use pvdt_core::pso::derive_seed;
use pvdt_core::sd_model::DARK_IRRADIANCE;
use pvdt_core::{mpp_point, EnvInputs, Measurement, OperatingPoint, PlantConstants, PvParams};

use crate::error::{HarnessError, Result};
use crate::tracker::PerturbObserve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Clear,
    Cloudy,
    Overcast,
}

/// One passing cloud: the irradiance factor dips by `depth` with smooth
/// edges of length `ramp_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub depth: f64,
    pub ramp_s: f64,
}

impl CloudEvent {
    fn shape(&self, t: f64) -> f64 {
        let x = t - self.start_s;
        if x <= 0.0 || x >= self.duration_s {
            return 0.0;
        }
        let edge = x.min(self.duration_s - x);
        if edge >= self.ramp_s {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * edge / self.ramp_s).cos()
        }
    }
}

/// Poisson arrivals over `[from_s, to_s)`.
pub fn cloud_events(seed: u64, from_s: f64, to_s: f64, rate_per_hour: f64) -> Vec<CloudEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if rate_per_hour <= 0.0 {
        return out;
    }
    let mut t = from_s;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() * 3600.0 / rate_per_hour;
        if t >= to_s {
            break;
        }
        let duration_s = rng.random_range(30.0..300.0);
        let depth = rng.random_range(0.2..0.75);
        let ramp_s = rng.random_range(5.0..30.0f64).min(duration_s / 2.0);
        out.push(CloudEvent { start_s: t, duration_s, depth, ramp_s });
    }
    out
}

/// Parameters in force from `at_s` (seconds since stream start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftKeyframe {
    pub at_s: f64,
    pub params: PvParams,
}

/// Irradiance sensor written to the `g_meas` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorModel {
    None,
    /// Sees the plant irradiance.
    Collocated { noise: f64 },
    /// Sees the same cloud field `lag_s` seconds late.
    Lagged { lag_s: f64, noise: f64 },
    /// Sees the same sky arc under an unrelated cloud field.
    Independent { noise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerMode {
    /// Samples sit exactly at the model MPP.
    Mpp,
    PerturbObserve { step_v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub params: PvParams,
    /// Piecewise-linear parameter path; `params` holds before the first
    /// keyframe. is0 is interpolated in log space.
    pub drift: Vec<DriftKeyframe>,
    pub plant: PlantConstants,
    pub duration_s: f64,
    /// Unix time of the first sample.
    pub start_unix: f64,
    /// Solar hour of the first sample.
    pub start_hour: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub peak_g: f64,
    pub t_amb_mean: f64,
    /// Relative standard deviation of the V and I noise.
    pub noise: f64,
    /// Fixed calibration gains of the V and I channels.
    pub gain_v: f64,
    pub gain_i: f64,
    pub sensor: SensorModel,
    pub tracker: TrackerMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Cloudy,
            params: PvParams::DATASHEET_OPT,
            drift: Vec::new(),
            plant: PlantConstants::default(),
            duration_s: 10_800.0,
            // 2022-11-15T10:30:00Z
            start_unix: 1_668_508_200.0,
            start_hour: 10.5,
            sunrise_hour: 7.0,
            sunset_hour: 17.0,
            peak_g: 950.0,
            t_amb_mean: 14.0,
            noise: 0.005,
            gain_v: 1.0,
            gain_i: 1.0,
            sensor: SensorModel::Collocated { noise: 0.01 },
            tracker: TrackerMode::Mpp,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRow {
    pub ts: f64,
    pub g: f64,
    pub t_c: f64,
    pub params: PvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub samples: Vec<Measurement>,
    pub truth: Vec<TruthRow>,
    pub clouds: Vec<CloudEvent>,
}

const CLOUD_RATE_PER_HOUR: f64 = 20.0;

/// Sky factor on a one-second grid starting at `from_s`.
struct Sky {
    from_s: f64,
    factor: Vec<f64>,
    clouds: Vec<CloudEvent>,
}

impl Sky {
    fn build(scenario: Scenario, seed: u64, from_s: f64, to_s: f64) -> Self {
        let n = (to_s - from_s).ceil().max(0.0) as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        // slow multiplicative ripple, Ornstein–Uhlenbeck
        let (sigma, tau, base, rate): (f64, f64, f64, f64) = match scenario {
            Scenario::Clear => (0.0, 1.0, 1.0, 0.0),
            Scenario::Cloudy => (0.02, 20.0, 1.0, CLOUD_RATE_PER_HOUR),
            Scenario::Overcast => (0.05, 300.0, 0.3, 0.0),
        };
        let clouds = cloud_events(derive_seed(seed, 2), from_s, to_s, rate);
        let a = (-1.0 / tau).exp();
        let kick = sigma * (1.0 - a * a).sqrt();
        let mut x = 0.0;
        let factor = (0..n)
            .map(|k| {
                let t = from_s + k as f64;
                if sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = a * x + kick * z;
                }
                // overlapping clouds: the thickest one sets the shade
                let dip = clouds.iter().map(|c| c.depth * c.shape(t)).fold(0.0, f64::max);
                (base * (1.0 + x) * (1.0 - dip)).clamp(0.0, 1.0)
            })
            .collect();
        Sky { from_s, factor, clouds }
    }

    fn at(&self, t: f64) -> f64 {
        let k = (t - self.from_s).round().max(0.0) as usize;
        self.factor[k.min(self.factor.len() - 1)]
    }
}

fn clear_sky(cfg: &SynthConfig, t_s: f64) -> f64 {
    let h = cfg.start_hour + t_s / 3600.0;
    let day = cfg.sunset_hour - cfg.sunrise_hour;
    let x = (h - cfg.sunrise_hour) / day;
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    cfg.peak_g * (std::f64::consts::PI * x).sin().powf(1.3)
}

fn ambient(cfg: &SynthConfig, t_s: f64) -> f64 {
    let h = cfg.start_hour + t_s / 3600.0;
    cfg.t_amb_mean + 4.0 * (std::f64::consts::PI * (h - 9.0) / 12.0).sin()
}

pub fn params_at(cfg: &SynthConfig, t_s: f64) -> PvParams {
    let mut prev = DriftKeyframe { at_s: f64::NEG_INFINITY, params: cfg.params };
    for kf in &cfg.drift {
        if t_s < kf.at_s {
            if !prev.at_s.is_finite() {
                return prev.params;
            }
            let w = (t_s - prev.at_s) / (kf.at_s - prev.at_s);
            let (a, b) = (prev.params.to_array(), kf.params.to_array());
            let mut x = [0.0; 5];
            for k in 0..4 {
                x[k] = a[k] + w * (b[k] - a[k]);
            }
            x[4] = (a[4].ln() + w * (b[4].ln() - a[4].ln())).exp();
            return PvParams::from_array(x);
        }
        prev = *kf;
    }
    prev.params
}

pub fn synth_plant(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    for kf in &cfg.drift {
        kf.params.validate().map_err(|e| HarnessError::Config(format!("drift at {} s: {e}", kf.at_s)))?;
    }
    if !(cfg.duration_s >= 1.0) || !(cfg.noise >= 0.0) {
        return Err(HarnessError::Config("duration must be at least 1 s and noise nonnegative".into()));
    }
    let n = cfg.duration_s.floor() as usize;
    let pad = match cfg.sensor {
        SensorModel::Lagged { lag_s, .. } => lag_s.abs().ceil(),
        _ => 0.0,
    };
    let sky = Sky::build(cfg.scenario, cfg.seed, -pad, n as f64);
    let sensor_sky = match cfg.sensor {
        SensorModel::Independent { .. } => Some(Sky::build(cfg.scenario, derive_seed(cfg.seed, 7), 0.0, n as f64)),
        _ => None,
    };
    let g_true = |t: f64| clear_sky(cfg, t) * sky.at(t);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| HarnessError::Config(e.to_string()));
    let meas_noise = normal(cfg.noise)?;

    let noct_rise = 25.0 / 800.0;
    let tau = 300.0;
    let mut t_c = ambient(cfg, 0.0) + noct_rise * g_true(0.0);
    let mut tracker: Option<PerturbObserve> = None;

    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64;
        let g = g_true(t);
        let target = ambient(cfg, t) + noct_rise * g;
        if k > 0 {
            t_c += (target - t_c) / tau;
        }
        let params = params_at(cfg, t);
        let env = EnvInputs::new(g, t_c);
        let op = if g < DARK_IRRADIANCE {
            OperatingPoint::zero()
        } else {
            match cfg.tracker {
                TrackerMode::Mpp => mpp_point(&params, &cfg.plant, &env).unwrap_or(OperatingPoint::zero()),
                TrackerMode::PerturbObserve { step_v } => {
                    let po = tracker.get_or_insert_with(|| {
                        let v0 = mpp_point(&params, &cfg.plant, &env).map(|o| o.v).unwrap_or(0.0);
                        PerturbObserve::new(step_v, v0)
                    });
                    po.step(&params, &cfg.plant, &env)
                }
            }
        };
        let ts = cfg.start_unix + t;
        let v = op.v * cfg.gain_v * (1.0 + meas_noise.sample(&mut rng));
        let i = op.i * cfg.gain_i * (1.0 + meas_noise.sample(&mut rng));
        let mut m = Measurement::new(ts, v.max(0.0), i.max(0.0), t_c);
        let sensor = match cfg.sensor {
            SensorModel::None => None,
            SensorModel::Collocated { noise } => Some((g, noise)),
            SensorModel::Lagged { lag_s, noise } => Some((clear_sky(cfg, t) * sky.at(t - lag_s), noise)),
            SensorModel::Independent { noise } => {
                Some((clear_sky(cfg, t) * sensor_sky.as_ref().map_or(1.0, |s| s.at(t)), noise))
            }
        };
        if let Some((gs, noise)) = sensor {
            let z: f64 = StandardNormal.sample(&mut rng);
            m.g_meas = Some((gs * (1.0 + noise * z)).max(0.0));
        }
        samples.push(m);
        truth.push(TruthRow { ts, g, t_c, params });
    }
    Ok(SynthOutput { samples, truth, clouds: sky.clouds })
}

/// Sidecar `ts,g,t_c,rs,rsh,kd,iph0,is0`.
pub fn save_truth(path: &Path, truth: &[TruthRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ts", "g", "t_c", "rs", "rsh", "kd", "iph0", "is0"])?;
    for r in truth {
        let p = r.params;
        w.write_record(
            [r.ts, r.g, r.t_c, p.rs, p.rsh, p.kd, p.iph0, p.is0].iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        )?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}
