//! Lumped single-diode PV model.
//!
//! The model relates terminal voltage and current through
//!
//! ```text
//! I = Iph − Is·(exp((V + I·Rs)/a) − 1) − (V + I·Rs)/Rsh
//! ```
//!
//! with the photocurrent, modified ideality factor and saturation current
//! scaled by irradiance and cell temperature. The maximum power point is
//! available in closed form through the Lambert-W auxiliary value ω; the
//! implicit curve solver is kept as an independent check of that formula and
//! for fitting against measured curves.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::lambert::lambert_w0;
use crate::scalar::Scalar;

/// Boltzmann constant (J/K, exact SI value).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge (C, exact SI value).
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Reference cell temperature at standard test conditions (K).
pub const T_STC: f64 = 298.15;
/// Freezing point offset between °C and K.
pub const T_FREEZE: f64 = 273.15;
/// Exponent constant of the saturation-current temperature law.
pub const SATURATION_EXP_COEFF: f64 = 47.1;
/// Irradiance below which the plant is treated as dark (W/m²).
pub const DARK_IRRADIANCE: f64 = 1.0;

/// The five fitted single-diode parameters.
///
/// `iph0` multiplies the raw irradiance in W/m², so `iph0·G` is in amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvParams<T = f64> {
    /// Series resistance (Ω).
    pub rs: T,
    /// Shunt resistance (Ω).
    pub rsh: T,
    /// Diode ideality coefficient.
    pub kd: T,
    /// Photocurrent coefficient (A per W/m²).
    pub iph0: T,
    /// Diode saturation current coefficient (A).
    pub is0: T,
}

/// Canonical parameter order used by vectors, bounds files and reports.
pub const PARAM_NAMES: [&str; 5] = ["rs", "rsh", "kd", "iph0", "is0"];

impl<T: Scalar> PvParams<T> {
    /// Builds a parameter set and checks the physical invariants.
    pub fn new(rs: T, rsh: T, kd: T, iph0: T, is0: T) -> Result<Self, ModelError> {
        let p = Self { rs, rsh, kd, iph0, is0 };
        p.validate()?;
        Ok(p)
    }

    /// All five strictly positive and finite, and `rs < rsh`.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in PARAM_NAMES.iter().zip(self.to_array()) {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(ModelError::InvalidParams(format!("{name} = {value} must be positive")));
            }
        }
        if self.rs >= self.rsh {
            return Err(ModelError::InvalidParams(format!(
                "rs = {} must be below rsh = {}",
                self.rs, self.rsh
            )));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.rs, self.rsh, self.kd, self.iph0, self.is0]
    }

    pub fn from_array(a: [T; 5]) -> Self {
        Self { rs: a[0], rsh: a[1], kd: a[2], iph0: a[3], is0: a[4] }
    }

    pub fn cast<U: Scalar>(&self) -> PvParams<U> {
        let a = self.to_array().map(|x| U::lit(x.to_f64_lossy()));
        PvParams::from_array(a)
    }
}

impl PvParams<f64> {
    /// Datasheet-fitted starting set `[Rs, Rsh, KD, Iph0, Is0]`.
    pub const DATASHEET_OPT: PvParams<f64> =
        PvParams { rs: 0.279, rsh: 216.990, kd: 1.086, iph0: 11.134, is0: 3.405e-10 };
}

/// Which argument is passed to W₀ when computing ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaForm {
    /// ω = W(Iph·e/Is)
    #[default]
    Literal,
    /// ω = W(e·(Iph/Is + 1)), which puts the MPP exactly on the curve.
    Exact,
}

/// Known plant constants, not fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConstants<T = f64> {
    /// Series-connected cells of the lumped unit.
    pub ns: u32,
    /// Short-circuit current temperature coefficient (1/°C).
    pub alpha_isc: T,
    pub k_boltzmann: T,
    pub q_electron: T,
    pub t_stc: T,
    pub t_fp: T,
    pub exp_coeff: T,
    pub omega_form: OmegaForm,
    /// Accepted cell temperature range (°C).
    pub t_min: T,
    pub t_max: T,
}

/// 72-cell modules, 500 in series.
pub const DEFAULT_NS: u32 = 72 * 500;

impl<T: Scalar> Default for PlantConstants<T> {
    fn default() -> Self {
        Self {
            ns: DEFAULT_NS,
            alpha_isc: T::lit(0.0005),
            k_boltzmann: T::lit(BOLTZMANN),
            q_electron: T::lit(ELECTRON_CHARGE),
            t_stc: T::lit(T_STC),
            t_fp: T::lit(T_FREEZE),
            exp_coeff: T::lit(SATURATION_EXP_COEFF),
            omega_form: OmegaForm::Literal,
            t_min: T::lit(-40.0),
            t_max: T::lit(90.0),
        }
    }
}

impl<T: Scalar> PlantConstants<T> {
    pub fn with_ns(mut self, ns: u32) -> Self {
        self.ns = ns;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.ns < 1 {
            return Err(ModelError::InvalidParams("ns must be at least 1".into()));
        }
        let fixed = [
            ("k_boltzmann", self.k_boltzmann, BOLTZMANN),
            ("q_electron", self.q_electron, ELECTRON_CHARGE),
            ("t_stc", self.t_stc, T_STC),
            ("t_fp", self.t_fp, T_FREEZE),
        ];
        for (name, value, expected) in fixed {
            if value != T::lit(expected) {
                return Err(ModelError::InvalidParams(format!("{name} is fixed at {expected}")));
            }
        }
        if !(self.t_min < self.t_max) {
            return Err(ModelError::InvalidParams("t_min must be below t_max".into()));
        }
        Ok(())
    }

    /// Thermal voltage k·T_STC/q (V).
    pub fn thermal_voltage(&self) -> T {
        self.k_boltzmann * self.t_stc / self.q_electron
    }
}

/// Irradiance and cell temperature driving the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvInputs<T = f64> {
    /// W/m²
    pub g: T,
    /// °C
    pub t_c: T,
}

impl<T: Scalar> EnvInputs<T> {
    pub fn new(g: T, t_c: T) -> Self {
        Self { g, t_c }
    }

    pub fn validate(&self, plant: &PlantConstants<T>) -> Result<(), ModelError> {
        if !(self.g >= T::zero()) || !self.g.is_finite() {
            return Err(ModelError::Domain(format!("irradiance {} must be non-negative", self.g)));
        }
        if !(self.t_c >= plant.t_min && self.t_c <= plant.t_max) {
            return Err(ModelError::Domain(format!(
                "temperature {} outside [{}, {}]",
                self.t_c, plant.t_min, plant.t_max
            )));
        }
        Ok(())
    }
}

/// Temperature- and irradiance-scaled model quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities<T = f64> {
    /// Photocurrent (A).
    pub i_ph: T,
    /// Modified ideality factor (V).
    pub a: T,
    /// Saturation current (A).
    pub i_s: T,
    /// Lambert-W auxiliary value.
    pub omega: T,
}

/// Model output at the maximum power point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatingPoint<T = f64> {
    pub v: T,
    pub i: T,
    pub p: T,
}

impl<T: Scalar> OperatingPoint<T> {
    /// `p` is always the product of the stored `v` and `i`.
    pub fn new(v: T, i: T) -> Self {
        Self { v, i, p: v * i }
    }

    pub fn zero() -> Self {
        Self { v: T::zero(), i: T::zero(), p: T::zero() }
    }
}

fn scaled_quantities<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
) -> (T, T, T) {
    let one = T::one();
    let t_k = env.t_c + plant.t_fp;
    let ratio = t_k / plant.t_stc;
    let i_ph = env.g * params.iph0 * (one + (env.t_c - T::lit(25.0)) * plant.alpha_isc);
    let ns = T::lit(f64::from(plant.ns));
    let a = params.kd * plant.thermal_voltage() * ns * ratio;
    let i_s = params.is0 * ratio.powi(3) * (plant.exp_coeff * (one - plant.t_stc / t_k)).exp();
    (i_ph, a, i_s)
}

/// Photocurrent, ideality factor, saturation current and ω for the given
/// conditions.
pub fn derive_quantities<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
) -> Result<DerivedQuantities<T>, ModelError> {
    let (i_ph, a, i_s) = scaled_quantities(params, plant, env);
    let arg = match plant.omega_form {
        OmegaForm::Literal => i_ph * T::E() / i_s,
        OmegaForm::Exact => T::E() * (i_ph / i_s + T::one()),
    };
    if !arg.is_finite() || arg < T::zero() || !(a > T::zero()) || !(i_s > T::zero()) {
        return Err(ModelError::Domain(format!(
            "nonphysical inputs: i_ph = {i_ph}, i_s = {i_s}, a = {a}"
        )));
    }
    let omega = lambert_w0(arg)?;
    Ok(DerivedQuantities { i_ph, a, i_s, omega })
}

/// Closed-form voltage/current/power at the maximum power point.
///
/// Irradiance under [`DARK_IRRADIANCE`] returns a zero operating point;
/// ω ≤ 1 otherwise is reported as [`ModelError::Degenerate`].
pub fn mpp_point<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
) -> Result<OperatingPoint<T>, ModelError> {
    if env.g < T::lit(DARK_IRRADIANCE) {
        return Ok(OperatingPoint::zero());
    }
    let d = derive_quantities(params, plant, env)?;
    mpp_from_derived(params, &d)
}

pub fn mpp_from_derived<T: Scalar>(
    params: &PvParams<T>,
    d: &DerivedQuantities<T>,
) -> Result<OperatingPoint<T>, ModelError> {
    let one = T::one();
    if !(d.omega > one) {
        return Err(ModelError::Degenerate { omega: d.omega.to_f64_lossy() });
    }
    let knee = one - one / d.omega;
    let v = (one + params.rs / params.rsh) * d.a * (d.omega - one) - params.rs * d.i_ph * knee;
    let i = d.i_ph * knee - d.a * (d.omega - one) / params.rsh;
    Ok(OperatingPoint::new(v, i))
}

const NEWTON_MAX_ITER: usize = 100;

/// Terminal current at voltage `v` from the implicit diode equation.
///
/// Safeguarded Newton iteration inside the bracket `[−v/Rs, Iph]`, on which
/// the residual is strictly decreasing.
pub fn current_at_voltage<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
    v: T,
) -> Result<T, ModelError> {
    if !(v >= T::zero()) || !v.is_finite() {
        return Err(ModelError::Domain(format!("voltage {v} must be non-negative")));
    }
    let (i_ph, a, i_s) = scaled_quantities(params, plant, env);
    let rs = params.rs;
    let rsh = params.rsh;
    let one = T::one();
    let residual = |i: T| {
        let u = v + i * rs;
        i_ph - i_s * (u / a).exp_m1() - u / rsh - i
    };
    let slope = |i: T| {
        let u = v + i * rs;
        -i_s * (u / a).exp() * rs / a - rs / rsh - one
    };

    // iterate to machine precision; `tol` only decides success at the cap
    let tol = T::lit(1e-9).max(T::lit(64.0) * T::epsilon()) * i_ph.abs().max(one);
    let mut lo = -v / rs;
    let mut hi = i_ph.max(lo);
    let mut i = hi;
    let mut f = residual(i);
    let mut last_step = T::infinity();
    for _ in 0..NEWTON_MAX_ITER {
        if f == T::zero()
            || (f.abs() <= tol && last_step.abs() <= T::lit(4.0) * T::epsilon() * i.abs().max(one))
        {
            return Ok(i);
        }
        if f.is_finite() {
            if f > T::zero() {
                lo = i;
            } else {
                hi = i;
            }
        } else {
            hi = i;
        }
        if hi - lo <= T::lit(4.0) * T::epsilon() * hi.abs().max(lo.abs()).max(one) {
            return Ok(i);
        }
        let df = slope(i);
        let mut next = if f.is_finite() && df.is_finite() && df < T::zero() { i - f / df } else { lo };
        if !(next > lo && next < hi) {
            next = T::lit(0.5) * (lo + hi);
        }
        last_step = next - i;
        i = next;
        f = residual(i);
    }
    if f.abs() <= tol {
        return Ok(i);
    }
    Err(ModelError::Convergence { iterations: NEWTON_MAX_ITER, residual: f.to_f64_lossy() })
}

/// Voltage at which the terminal current is zero.
pub fn open_circuit_voltage<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
) -> Result<T, ModelError> {
    let (i_ph, a, i_s) = scaled_quantities(params, plant, env);
    if !(i_ph > T::zero()) {
        return Ok(T::zero());
    }
    let one = T::one();
    // residual of the voltage equation at I = 0, increasing in v
    let g = |v: T| i_s * (v / a).exp_m1() + v / params.rsh - i_ph;
    let mut lo = T::zero();
    let mut hi = a * (i_ph / i_s + one).ln();
    if g(hi) < T::zero() {
        hi = i_ph * params.rsh;
    }
    let mut v = hi;
    for _ in 0..NEWTON_MAX_ITER {
        let r = g(v);
        if r > T::zero() {
            hi = v;
        } else {
            lo = v;
        }
        if hi - lo <= T::lit(4.0) * T::epsilon() * hi.max(one) || r == T::zero() {
            return Ok(v);
        }
        let dr = i_s * (v / a).exp() / a + one / params.rsh;
        let mut next = v - r / dr;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = T::lit(0.5) * (lo + hi);
        }
        v = next;
    }
    Ok(v)
}

/// KCL residual in log form,
/// `−V − I·Rs + a·ln[(Iph − I − (V + I·Rs)/Rsh)/Is + 1]`.
///
/// Zero exactly on the model I–V curve. A non-positive log argument yields
/// [`ModelError::Infeasible`].
pub fn kcl_residual<T: Scalar>(
    params: &PvParams<T>,
    plant: &PlantConstants<T>,
    env: &EnvInputs<T>,
    v: T,
    i: T,
) -> Result<T, ModelError> {
    let (i_ph, a, i_s) = scaled_quantities(params, plant, env);
    let arg = (i_ph - i - (v + i * params.rs) / params.rsh) / i_s;
    if !(arg > -T::one()) || !arg.is_finite() {
        return Err(ModelError::Infeasible);
    }
    Ok(-v - i * params.rs + a * arg.ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;

    const X2: PvParams = PvParams::DATASHEET_OPT;

    fn plant() -> PlantConstants {
        PlantConstants::default()
    }

    /// Plain bisection on the implicit equation, independent of the solver.
    fn bisect_current(p: &PvParams, pl: &PlantConstants, env: &EnvInputs, v: f64) -> f64 {
        let (i_ph, a, i_s) = scaled_quantities(p, pl, env);
        let f = |i: f64| i_ph - i_s * ((v + i * p.rs) / a).exp_m1() - (v + i * p.rs) / p.rsh - i;
        let (mut lo, mut hi) = (-v / p.rs, i_ph);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn dark_photocurrent_is_zero() {
        for t in [-10.0, 25.0, 60.0] {
            let d = derive_quantities(&X2, &plant(), &EnvInputs::new(0.0, t)).unwrap();
            assert_eq!(d.i_ph, 0.0);
        }
    }

    #[test]
    fn photocurrent_at_reference_temperature() {
        let d = derive_quantities(&X2, &plant(), &EnvInputs::new(1000.0, 25.0)).unwrap();
        assert!((d.i_ph - 11134.0).abs() < 1e-9);
        // saturation current equals the coefficient at T_STC
        assert!((d.i_s - X2.is0).abs() <= 1e-24);
        assert!(d.omega > 1.0);
    }

    #[test]
    fn exact_omega_form_is_close_to_literal() {
        let env = EnvInputs::new(800.0, 30.0);
        let lit = derive_quantities(&X2, &plant(), &env).unwrap();
        let mut pl = plant();
        pl.omega_form = OmegaForm::Exact;
        let ex = derive_quantities(&X2, &pl, &env).unwrap();
        assert!(ex.omega > lit.omega);
        assert!((ex.omega - lit.omega).abs() < 1e-9);
    }

    #[test]
    fn dark_mpp_is_zero_power() {
        let op = mpp_point(&X2, &plant(), &EnvInputs::new(0.0, 20.0)).unwrap();
        assert_eq!(op, OperatingPoint::zero());
    }

    #[test]
    fn degenerate_when_omega_at_most_one() {
        // photocurrent barely above the saturation current
        let p = PvParams { rs: 0.1, rsh: 100.0, kd: 1.0, iph0: 1e-12, is0: 1e-6 };
        let r = mpp_point(&p, &plant(), &EnvInputs::new(10.0, 25.0));
        assert!(matches!(r, Err(ModelError::Degenerate { .. })));
    }

    #[test]
    fn power_is_product() {
        let op = mpp_point(&X2, &plant(), &EnvInputs::new(735.0, 31.0)).unwrap();
        assert_eq!(op.p, op.v * op.i);
    }

    #[test]
    fn mpp_matches_brute_force_scan_at_stc() {
        let env = EnvInputs::new(1000.0, 25.0);
        let op = mpp_point(&X2, &plant(), &env).unwrap();
        let voc = open_circuit_voltage(&X2, &plant(), &env).unwrap();
        let n = 20_000;
        let best = (0..=n)
            .map(|k| {
                let v = voc * k as f64 / n as f64;
                v * bisect_current(&X2, &plant(), &env, v)
            })
            .fold(f64::MIN, f64::max);
        assert!(((op.p - best) / best).abs() < 5e-3, "p={} scan={}", op.p, best);
    }

    #[test]
    fn mpp_power_increases_with_irradiance() {
        let mut last = 0.0;
        for g in [200.0, 400.0, 600.0, 800.0, 1000.0] {
            let p = mpp_point(&X2, &plant(), &EnvInputs::new(g, 25.0)).unwrap().p;
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn short_circuit_current_matches_bisection() {
        let env = EnvInputs::new(900.0, 40.0);
        let i = current_at_voltage(&X2, &plant(), &env, 0.0).unwrap();
        let r = bisect_current(&X2, &plant(), &env, 0.0);
        assert!((i - r).abs() < 1e-7 * r);
        let d = derive_quantities(&X2, &plant(), &env).unwrap();
        // close to the shunt divider value since the diode is off at V = 0
        assert!((i - d.i_ph * X2.rsh / (X2.rsh + X2.rs)).abs() < 1e-3 * i);
    }

    #[test]
    fn mpp_voltage_reproduces_mpp_current() {
        for g in [150.0, 500.0, 1000.0] {
            let env = EnvInputs::new(g, 35.0);
            let op = mpp_point(&X2, &plant(), &env).unwrap();
            let i = current_at_voltage(&X2, &plant(), &env, op.v).unwrap();
            assert!(((i - op.i) / op.i).abs() < 0.01);
        }
    }

    #[test]
    fn dark_short_circuit() {
        let i = current_at_voltage(&X2, &plant(), &EnvInputs::new(0.0, 25.0), 0.0).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn residual_zero_on_curve() {
        let env = EnvInputs::new(420.0, 18.0);
        let d = derive_quantities(&X2, &plant(), &env).unwrap();
        let voc = open_circuit_voltage(&X2, &plant(), &env).unwrap();
        // near short circuit the log form cancels catastrophically; check the
        // knee-to-open-circuit half of the curve
        for k in 0..20 {
            let v = voc * (0.5 + 0.5 * k as f64 / 20.0);
            let i = current_at_voltage(&X2, &plant(), &env, v).unwrap();
            let r = kcl_residual(&X2, &plant(), &env, v, i).unwrap();
            assert!(r.abs() <= 1e-6 * d.a, "v={v} r={r}");
        }
    }

    #[test]
    fn residual_infeasible_above_photocurrent() {
        let env = EnvInputs::new(500.0, 25.0);
        let d = derive_quantities(&X2, &plant(), &env).unwrap();
        let r = kcl_residual(&X2, &plant(), &env, 0.0, d.i_ph + 1.0);
        assert_eq!(r, Err(ModelError::Infeasible));
    }

    #[test]
    fn residual_changes_sign_around_generating_irradiance() {
        let op = mpp_point(&X2, &plant(), &EnvInputs::new(500.0, 25.0)).unwrap();
        let at = |g: f64| kcl_residual(&X2, &plant(), &EnvInputs::new(g, 25.0), op.v, op.i);
        assert!(at(600.0).unwrap().abs() > 0.0);
        let below = at(495.0).map(|r| r < 0.0).unwrap_or(true);
        assert!(below);
        assert!(at(505.0).unwrap() > 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(PvParams::new(0.3, 200.0, 1.1, 11.0, 1e-10).is_ok());
        assert!(PvParams::new(-0.3, 200.0, 1.1, 11.0, 1e-10).is_err());
        assert!(PvParams::new(300.0, 200.0, 1.1, 11.0, 1e-10).is_err());
        assert!(PvParams::new(0.3, 200.0, 1.1, 11.0, 0.0).is_err());
    }

    #[test]
    fn plant_constants_are_fixed() {
        assert!(plant().validate().is_ok());
        let mut p = plant();
        p.t_stc = 300.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn env_validation() {
        assert!(EnvInputs::new(10.0, 25.0).validate(&plant()).is_ok());
        assert!(EnvInputs::new(-1.0, 25.0).validate(&plant()).is_err());
        assert!(EnvInputs::new(10.0, 120.0).validate(&plant()).is_err());
    }

    #[test]
    fn single_precision_model() {
        let p: PvParams<f32> = X2.cast();
        let op = mpp_point(&p, &PlantConstants::<f32>::default(), &EnvInputs::new(800.0f32, 25.0))
            .unwrap();
        let op64 = mpp_point(&X2, &plant(), &EnvInputs::new(800.0, 25.0)).unwrap();
        assert!(((op.p as f64 - op64.p) / op64.p).abs() < 1e-4);
    }
}
