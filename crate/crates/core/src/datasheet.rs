//! Offline fit of the initial parameter set to manufacturer I–V curves.
//!
//! The objective is the RMSE of the model current at each curve point's
//! voltage, minimized by the swarm. A first pass searches the whole box;
//! later passes search boxes shrunk around the incumbent, which is injected
//! as a particle.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::irradiance::INFEASIBLE_PENALTY;
use crate::param_space::{ParamBounds, ParamSpace, ALL_FREE};
use crate::pso::{derive_seed, minimize_seeded, Bounds, PsoConfig};
use crate::scalar::Scalar;
use crate::sd_model::{current_at_voltage, EnvInputs, PlantConstants, PvParams};

/// Minimum number of curve points (one per parameter).
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T = f64> {
    /// V
    pub v: T,
    /// A
    pub i: T,
    /// Irradiance the curve was taken at (W/m²).
    pub g: T,
    /// °C
    pub t_c: T,
}

impl<T: Scalar> CurvePoint<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v >= T::zero() && self.i >= T::zero()) {
            return Err(format!("negative voltage or current ({}, {})", self.v, self.i));
        }
        if !(self.g > T::zero() && self.t_c.is_finite()) {
            return Err(format!("curve conditions g = {}, t = {} not usable", self.g, self.t_c));
        }
        Ok(())
    }
}

/// Swarm settings suited to the offline fit: the kd–is0 valley needs more
/// exploration than the online stages.
pub fn default_pso() -> PsoConfig {
    PsoConfig::constriction(40, 300)
}

/// Shrinking-box refinement after the first full-box pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Refinement {
    /// Additional passes after the first.
    pub rounds: usize,
    /// Half-width of each new box relative to the previous one.
    pub shrink: f64,
    /// Stop when a pass improves the RMSE by less than this fraction
    /// (0 disables the check).
    pub min_gain: f64,
    /// Independent fits started from the full box; the best one after
    /// `screen_rounds` refinement passes is refined to the end.
    pub restarts: usize,
    pub screen_rounds: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self { rounds: 25, shrink: 0.5, min_gain: 0.0, restarts: 4, screen_rounds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasheetFit<T = f64> {
    pub params: PvParams<T>,
    /// A
    pub rmse: T,
    /// Largest |ΔI| as a fraction of the short-circuit current of its curve.
    pub max_current_deviation: T,
    /// Largest |ΔP| as a fraction of the largest measured power of its curve.
    pub max_power_deviation: T,
    pub passes: usize,
    pub evaluations: usize,
}

/// Unique points with their share of the total count.
struct Weighted<T> {
    points: Vec<CurvePoint<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> Weighted<T> {
    fn new(points: &[CurvePoint<T>]) -> Self {
        let mut index: HashMap<[u64; 4], usize> = HashMap::new();
        let mut unique = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for p in points {
            let key = [p.v, p.i, p.g, p.t_c].map(|x| x.to_f64_lossy().to_bits());
            match index.get(&key) {
                Some(&k) => counts[k] += 1,
                None => {
                    index.insert(key, unique.len());
                    unique.push(*p);
                    counts.push(1);
                }
            }
        }
        // count/total rounds identically under uniform duplication
        let total = T::from_usize(points.len()).unwrap();
        let weights = counts.iter().map(|c| T::from_usize(*c).unwrap() / total).collect();
        Self { points: unique, weights }
    }

    fn rmse(&self, params: &PvParams<T>, plant: &PlantConstants<T>) -> T {
        let mut acc = T::zero();
        for (p, w) in self.points.iter().zip(&self.weights) {
            match current_at_voltage(params, plant, &EnvInputs::new(p.g, p.t_c), p.v) {
                Ok(i) if i.is_finite() => acc = acc + *w * (i - p.i) * (i - p.i),
                _ => return T::lit(INFEASIBLE_PENALTY),
            }
        }
        acc.sqrt()
    }
}

/// RMSE of the model current over the points, or the penalty if the curve
/// cannot be evaluated somewhere.
pub fn datasheet_rmse<T: Scalar>(points: &[CurvePoint<T>], params: &PvParams<T>, plant: &PlantConstants<T>) -> T {
    Weighted::new(points).rmse(params, plant)
}

/// Largest current and power deviations, normalized per curve (points that
/// share g and t_c) by the curve's largest measured current and power.
pub fn curve_deviation<T: Scalar>(
    points: &[CurvePoint<T>],
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
) -> (T, T) {
    let key = |p: &CurvePoint<T>| (p.g.to_f64_lossy().to_bits(), p.t_c.to_f64_lossy().to_bits());
    let mut scale: HashMap<(u64, u64), (T, T)> = HashMap::new();
    for p in points {
        let e = scale.entry(key(p)).or_insert((T::zero(), T::zero()));
        e.0 = e.0.max(p.i);
        e.1 = e.1.max(p.v * p.i);
    }
    let (mut di, mut dp) = (T::zero(), T::zero());
    for p in points {
        let (isc, pmax) = scale[&key(p)];
        let Ok(i) = current_at_voltage(params, plant, &EnvInputs::new(p.g, p.t_c), p.v) else {
            return (T::infinity(), T::infinity());
        };
        let d = (i - p.i).abs();
        if isc > T::zero() {
            di = di.max(d / isc);
        }
        if pmax > T::zero() {
            dp = dp.max(p.v * d / pmax);
        }
    }
    (di, dp)
}

/// One independent fit: a full-box pass followed by shrinking-box passes
/// around the incumbent.
struct Chain<T> {
    best_y: Vec<T>,
    best_f: T,
    half: Vec<T>,
    seed: u64,
    passes: usize,
    evaluations: usize,
}

impl<T: Scalar> Chain<T> {
    fn start(objective: &(impl Fn(&[T]) -> T + Sync), full: &Bounds<T>, cfg: &PsoConfig, seed: u64) -> Result<Self, FitError> {
        let pass_cfg = PsoConfig { seed: derive_seed(seed, 0), ..cfg.clone() };
        let first = minimize_seeded(objective, full, &pass_cfg, &[])?;
        let half = full.lower.iter().zip(&full.upper).map(|(l, u)| (*u - *l) / T::lit(2.0)).collect();
        Ok(Self { best_y: first.x_best, best_f: first.f_best, half, seed, passes: 1, evaluations: first.evaluations })
    }

    /// Returns false once refining cannot continue.
    fn refine(
        &mut self,
        objective: &(impl Fn(&[T]) -> T + Sync),
        full: &Bounds<T>,
        cfg: &PsoConfig,
        refine: &Refinement,
        round: usize,
    ) -> Result<bool, FitError> {
        if self.best_f == T::zero() {
            return Ok(false);
        }
        for h in self.half.iter_mut() {
            *h = *h * T::lit(refine.shrink);
        }
        let lower = (0..full.dim()).map(|k| (self.best_y[k] - self.half[k]).max(full.lower[k])).collect();
        let upper = (0..full.dim()).map(|k| (self.best_y[k] + self.half[k]).min(full.upper[k])).collect();
        let Ok(local) = Bounds::new(lower, upper) else {
            return Ok(false);
        };
        let pass_cfg = PsoConfig { seed: derive_seed(self.seed, round as u64 + 1), ..cfg.clone() };
        let out = minimize_seeded(objective, &local, &pass_cfg, std::slice::from_ref(&self.best_y))?;
        self.evaluations += out.evaluations;
        self.passes += 1;
        let gain = (self.best_f - out.f_best) / self.best_f;
        if out.f_best < self.best_f {
            self.best_y = out.x_best;
            self.best_f = out.f_best;
        }
        Ok(!(refine.min_gain > 0.0 && gain < T::lit(refine.min_gain)))
    }
}

/// Fits the five parameters to the curve points with the default refinement.
pub fn fit_datasheet<T: Scalar>(
    points: &[CurvePoint<T>],
    plant: &PlantConstants<T>,
    bounds: &ParamBounds<T>,
    cfg: &PsoConfig,
) -> Result<DatasheetFit<T>, FitError> {
    fit_datasheet_with(points, plant, bounds, cfg, &Refinement::default())
}

pub fn fit_datasheet_with<T: Scalar>(
    points: &[CurvePoint<T>],
    plant: &PlantConstants<T>,
    bounds: &ParamBounds<T>,
    cfg: &PsoConfig,
    refine: &Refinement,
) -> Result<DatasheetFit<T>, FitError> {
    if points.len() < MIN_POINTS {
        return Err(FitError::InsufficientData { got: points.len(), need: MIN_POINTS });
    }
    for (k, p) in points.iter().enumerate() {
        p.validate().map_err(|e| FitError::DegenerateInput(format!("point {k}: {e}")))?;
    }
    cfg.validate()?;
    bounds.validate()?;
    if !(refine.shrink > 0.0 && refine.shrink < 1.0) {
        return Err(crate::error::ConfigError::Pso(format!("shrink factor {} outside (0, 1)", refine.shrink)).into());
    }

    let data = Weighted::new(points);
    // pinned values are irrelevant with every coordinate free
    let space = ParamSpace::new(*bounds, ALL_FREE, bounds.lower);
    let full = space.search_bounds()?;
    let objective = |y: &[T]| data.rmse(&space.to_params(y), plant);

    let restarts = refine.restarts.max(1);
    let mut chains = Vec::with_capacity(restarts);
    for r in 0..restarts {
        // restart 0 keeps the single-chain seed sequence
        let seed = if r == 0 { cfg.seed } else { derive_seed(cfg.seed, (1 << 32) | r as u64) };
        let mut chain = Chain::start(&objective, &full, cfg, seed)?;
        for round in 0..refine.screen_rounds.min(refine.rounds) {
            if !chain.refine(&objective, &full, cfg, refine, round)? {
                break;
            }
        }
        chains.push(chain);
    }
    let mut chain = chains.into_iter().fold(None::<Chain<T>>, |acc, c| match acc {
        Some(a) if a.best_f <= c.best_f => Some(Chain { evaluations: a.evaluations + c.evaluations, passes: a.passes + c.passes, ..a }),
        Some(a) => Some(Chain { evaluations: a.evaluations + c.evaluations, passes: a.passes + c.passes, ..c }),
        None => Some(c),
    })
    .expect("at least one restart");
    for round in refine.screen_rounds.min(refine.rounds)..refine.rounds {
        if !chain.refine(&objective, &full, cfg, refine, round)? {
            break;
        }
    }
    let Chain { best_y, best_f, passes, evaluations, .. } = chain;

    let params = space.to_params(&best_y);
    let (max_current_deviation, max_power_deviation) = curve_deviation(points, &params, plant);
    Ok(DatasheetFit { params, rmse: best_f, max_current_deviation, max_power_deviation, passes, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    const X2: PvParams = PvParams::DATASHEET_OPT;

    /// Bisection on the implicit diode equation, used to generate curves.
    fn bisect_current(p: &PvParams, g: f64, t: f64, v: f64) -> f64 {
        let plant = PlantConstants::<f64>::default();
        let tk = t + 273.15;
        let a = p.kd * plant.thermal_voltage() * plant.ns as f64 * tk / 298.15;
        let iph = g * p.iph0 * (1.0 + (t - 25.0) * plant.alpha_isc);
        let is = p.is0 * (tk / 298.15).powi(3) * (47.1 * (1.0 - 298.15 / tk)).exp();
        let f = |i: f64| iph - is * (((v + i * p.rs) / a).exp() - 1.0) - (v + i * p.rs) / p.rsh - i;
        let (mut lo, mut hi) = (-1e6, iph + 1.0);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn curve(g: f64, n: usize) -> Vec<CurvePoint> {
        let voc = crate::sd_model::open_circuit_voltage(&X2, &PlantConstants::default(), &EnvInputs::new(g, 25.0)).unwrap();
        (0..n)
            .map(|k| {
                let v = voc * k as f64 / n as f64;
                CurvePoint { v, i: bisect_current(&X2, g, 25.0, v), g, t_c: 25.0 }
            })
            .collect()
    }

    #[test]
    fn too_few_points() {
        let pts = curve(1000.0, 4);
        let r = fit_datasheet(&pts, &PlantConstants::default(), &ParamBounds::default(), &PsoConfig::default());
        assert_eq!(r.unwrap_err(), FitError::InsufficientData { got: 4, need: 5 });
    }

    #[test]
    fn generating_parameters_have_tiny_rmse() {
        let pts = curve(800.0, 25);
        let r = datasheet_rmse(&pts, &X2, &PlantConstants::default());
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn duplication_leaves_objective_unchanged() {
        let pts = curve(600.0, 12);
        let doubled: Vec<_> = pts.iter().chain(pts.iter()).copied().collect();
        let tripled: Vec<_> = pts.iter().chain(&pts).chain(&pts).copied().collect();
        let p = PvParams { rs: 0.3, ..X2 };
        let plant = PlantConstants::default();
        let base = datasheet_rmse(&pts, &p, &plant);
        assert_eq!(datasheet_rmse(&doubled, &p, &plant), base);
        assert_eq!(datasheet_rmse(&tripled, &p, &plant), base);
    }

    #[test]
    fn refit_recovers_curve() {
        let mut pts = curve(1000.0, 20);
        pts.extend(curve(500.0, 20));
        let fit = fit_datasheet(&pts, &PlantConstants::default(), &ParamBounds::default(), &default_pso().with_seed(4))
            .unwrap();
        assert!(fit.rmse <= 1e-3, "{fit:?}");
        assert!(fit.max_current_deviation <= 1e-3, "{fit:?}");
        assert!(ParamBounds::default().contains(&fit.params));
    }
}
