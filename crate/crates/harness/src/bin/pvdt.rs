use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use pvdt_core::datasheet::{curve_deviation, default_pso, fit_datasheet};
use pvdt_core::{ParamBounds, PlantConstants, UpdatePolicy};
use pvdt_harness::config::{Method, RunConfig};
use pvdt_harness::formats::{load_bounds, load_curve, load_params, save_json, ParamsFile};
use pvdt_harness::report::{write_run, write_summary_table, Summary};
use pvdt_harness::sweep::{compare_methods, sweep_policies, sweep_policy_set};
use pvdt_harness::synth::{save_truth, synth_plant, Scenario, SensorModel, SynthConfig, TrackerMode};
use pvdt_harness::telemetry::{load_telemetry, save_telemetry};
use pvdt_harness::ReplayOutput;

const EXIT_EMPTY: u8 = 2;

#[derive(Parser)]
#[command(name = "pvdt", version, about = "Real-time parameterization of a photovoltaic digital twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the five model parameters to datasheet I–V curves.
    FitDatasheet {
        /// CSV with columns v,i,g,t_c.
        curve: PathBuf,
        /// CSV with rows name,lower,upper; defaults to the built-in box.
        #[arg(long)]
        bounds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Series-connected cells of the lumped unit.
        #[arg(long)]
        ns: Option<u32>,
    },
    /// Generate synthetic plant telemetry.
    Synth(SynthArgs),
    /// Replay telemetry under one method and update policy.
    Replay(RunArgs),
    /// Replay under every fixed interval and the event trigger.
    SweepPolicies(RunArgs),
    /// Replay every method the telemetry supports.
    CompareMethods(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthesis config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Parameter JSON (bare or as written by fit-datasheet).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative standard deviation of V and I noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Perturb-and-observe tracker with this voltage step instead of exact MPP.
    #[arg(long)]
    po_step: Option<f64>,
    /// Omit the g_meas column.
    #[arg(long)]
    no_sensor: bool,
    /// Irradiance sensor lag (s).
    #[arg(long)]
    sensor_lag: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar; defaults to <out>.truth.csv.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// fixed:<seconds> or event:<threshold>.
    #[arg(long)]
    policy: Option<UpdatePolicy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resample: Option<f64>,
    /// Warm-start parameter JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Replay window start, Unix seconds.
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    end: Option<f64>,
}

impl RunArgs {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(p) = self.policy {
            cfg.policy = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.resample {
            cfg.resample_s = r;
        }
        if let Some(p) = &self.params {
            cfg.params_file = Some(p.clone());
            cfg.warm_start = None;
        }
        if let Some(b) = &self.bounds {
            cfg.bounds_file = Some(b.clone());
        }
        if self.start.is_some() {
            cfg.window_start = self.start;
        }
        if self.end.is_some() {
            cfg.window_end = self.end;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.clone());
        }
        Ok(cfg)
    }
}

fn print_summary(label: &str, s: &Summary) {
    match &s.metrics {
        Some(m) => eprintln!(
            "{label}: {} updates, MAPE I {:.3}% V {:.3}% P {:.3}% over {} steps",
            s.counts.updates, m.i.mape, m.v.mape, m.p.mape, m.n
        ),
        None => eprintln!("{label}: no daylight steps"),
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    cfg.out_dir.as_deref().context("no output directory: pass --out-dir or set out_dir in the config")
}

fn write_batch(dir: &Path, runs: &[(RunConfig, ReplayOutput)], label: impl Fn(&RunConfig) -> String, table: &str) -> anyhow::Result<bool> {
    let mut rows = Vec::new();
    for (cfg, out) in runs {
        let l = label(cfg);
        let s = write_run(&dir.join(&l), cfg, out)?;
        print_summary(&l, &s);
        rows.push((l, s));
    }
    write_summary_table(&dir.join(format!("{table}.csv")), &rows)?;
    let summaries: Vec<&Summary> = rows.iter().map(|(_, s)| s).collect();
    save_json(&dir.join(format!("{table}.json")), &summaries)?;
    Ok(rows.iter().all(|(_, s)| s.is_empty()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::FitDatasheet { curve, bounds, out, seed, ns } => {
            let points = load_curve(&curve)?;
            let bounds = match bounds {
                Some(b) => load_bounds(&b)?,
                None => ParamBounds::default(),
            };
            let mut plant = PlantConstants::default();
            if let Some(ns) = ns {
                plant.ns = ns;
            }
            let fit = fit_datasheet(&points, &plant, &bounds, &default_pso().with_seed(seed))?;
            let (dev_i, dev_p) = curve_deviation(&points, &fit.params, &plant);
            eprintln!("rmse {:e} A, max current deviation {:.4}%", fit.rmse, 100.0 * dev_i);
            save_json(
                &out,
                &ParamsFile {
                    params: fit.params,
                    rmse: Some(fit.rmse),
                    max_current_deviation: Some(dev_i),
                    max_power_deviation: Some(dev_p),
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(a) => {
            let mut cfg = match &a.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
                    serde_json::from_str(&text).with_context(|| p.display().to_string())?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = a.scenario {
                cfg.scenario = s;
            }
            if let Some(p) = &a.params {
                cfg.params = load_params(p)?;
            }
            if let Some(d) = a.duration {
                cfg.duration_s = d;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(n) = a.noise {
                cfg.noise = n;
            }
            if let Some(step_v) = a.po_step {
                cfg.tracker = TrackerMode::PerturbObserve { step_v };
            }
            if let Some(lag_s) = a.sensor_lag {
                let noise = match cfg.sensor {
                    SensorModel::Collocated { noise } | SensorModel::Lagged { noise, .. } | SensorModel::Independent { noise } => noise,
                    SensorModel::None => 0.0,
                };
                cfg.sensor = SensorModel::Lagged { lag_s, noise };
            }
            if a.no_sensor {
                cfg.sensor = SensorModel::None;
            }
            let out = synth_plant(&cfg)?;
            save_telemetry(&a.out, &out.samples, cfg.sensor != SensorModel::None)?;
            let truth = a.truth.unwrap_or_else(|| {
                let mut name = a.out.file_stem().unwrap_or_default().to_os_string();
                name.push(".truth.csv");
                a.out.with_file_name(name)
            });
            save_truth(&truth, &out.truth)?;
            eprintln!("{} samples, {} cloud events", out.samples.len(), out.clouds.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay(a) => {
            let mut cfg = a.run_config()?;
            let warm = cfg.resolve()?;
            let tele = load_telemetry(&a.input)?;
            for g in &tele.gaps {
                eprintln!("gap in telemetry: {} .. {}", g.from_ts, g.to_ts);
            }
            let out = pvdt_harness::replay(&cfg, &tele, &warm)?;
            let s = write_run(out_dir(&cfg)?, &cfg, &out)?;
            print_summary(&format!("{} {}", cfg.method, cfg.policy), &s);
            Ok(if s.is_empty() { ExitCode::from(EXIT_EMPTY) } else { ExitCode::SUCCESS })
        }
        Command::SweepPolicies(a) => {
            let mut cfg = a.run_config()?;
            let warm = cfg.resolve()?;
            let tele = load_telemetry(&a.input)?;
            let runs = sweep_policies(&cfg, &tele, &warm, &sweep_policy_set(&cfg))?;
            let empty = write_batch(out_dir(&cfg)?, &runs, |c| c.policy.label(), "sweep_summary")?;
            Ok(if empty { ExitCode::from(EXIT_EMPTY) } else { ExitCode::SUCCESS })
        }
        Command::CompareMethods(a) => {
            let mut cfg = a.run_config()?;
            let warm = cfg.resolve()?;
            let tele = load_telemetry(&a.input)?;
            let (runs, skipped) = compare_methods(&cfg, &tele, &warm)?;
            for m in skipped {
                eprintln!("{m}: skipped, telemetry has no g_meas column");
            }
            if runs.is_empty() {
                bail!("no method applicable");
            }
            let empty = write_batch(out_dir(&cfg)?, &runs, |c| c.method.to_string(), "compare_summary")?;
            Ok(if empty { ExitCode::from(EXIT_EMPTY) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
