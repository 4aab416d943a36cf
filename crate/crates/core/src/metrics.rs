//! Prediction-error statistics and the transient performance index.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::irradiance::{DarkThresholds, Measurement};
use crate::scalar::Scalar;
use crate::sd_model::OperatingPoint;

/// Relative current and voltage error of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors<T = f64> {
    pub i: T,
    pub v: T,
}

impl<T: Scalar> RelativeErrors<T> {
    pub fn max(&self) -> T {
        self.i.max(self.v)
    }
}

/// `|meas − pred| / max(meas, floor)` per channel, floors taken from the dark
/// thresholds.
pub fn relative_errors<T: Scalar>(
    meas: &Measurement<T>,
    pred: &OperatingPoint<T>,
    dark: &DarkThresholds,
) -> RelativeErrors<T> {
    RelativeErrors {
        i: (meas.i_meas - pred.i).abs() / meas.i_meas.max(T::lit(dark.i)),
        v: (meas.v_meas - pred.v).abs() / meas.v_meas.max(T::lit(dark.v)),
    }
}

/// Error statistics of one channel. Percentages are in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelError {
    pub mape: f64,
    pub min_ape: f64,
    pub max_ape: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub i: ChannelError,
    pub v: ChannelError,
    pub p: ChannelError,
}

impl ErrorReport {
    pub fn mape_i(&self) -> f64 {
        self.i.mape
    }
    pub fn mape_v(&self) -> f64 {
        self.v.mape
    }
    pub fn mape_p(&self) -> f64 {
        self.p.mape
    }
}

struct Accumulator {
    ape_sum: f64,
    ape_min: f64,
    ape_max: f64,
    sq_sum: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self { ape_sum: 0.0, ape_min: f64::INFINITY, ape_max: 0.0, sq_sum: 0.0 }
    }

    fn push(&mut self, meas: f64, pred: f64, channel: &str) -> Result<(), MetricsError> {
        if meas == 0.0 || !meas.is_finite() || !pred.is_finite() {
            return Err(MetricsError::Domain(format!("{channel}: measured {meas}, predicted {pred}")));
        }
        let d = meas - pred;
        let ape = 100.0 * d.abs() / meas.abs();
        self.ape_sum += ape;
        self.ape_min = self.ape_min.min(ape);
        self.ape_max = self.ape_max.max(ape);
        self.sq_sum += d * d;
        Ok(())
    }

    fn finish(&self, n: usize) -> ChannelError {
        let nf = n as f64;
        // the mean of equal terms can land one ulp outside its extremes
        let mape = (self.ape_sum / nf).max(self.ape_min).min(self.ape_max);
        ChannelError { mape, min_ape: self.ape_min, max_ape: self.ape_max, rmse: (self.sq_sum / nf).sqrt() }
    }
}

/// MAPE, RMSE and APE extremes for current, voltage and power.
///
/// A zero measurement in any channel is a [`MetricsError::Domain`]; dark
/// samples are expected to be filtered out beforehand.
pub fn compute_error_report<T: Scalar>(
    pairs: &[(Measurement<T>, OperatingPoint<T>)],
) -> Result<ErrorReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut ai, mut av, mut ap) = (Accumulator::new(), Accumulator::new(), Accumulator::new());
    for (m, p) in pairs {
        ai.push(m.i_meas.to_f64_lossy(), p.i.to_f64_lossy(), "current")?;
        av.push(m.v_meas.to_f64_lossy(), p.v.to_f64_lossy(), "voltage")?;
        ap.push(m.p_meas.to_f64_lossy(), p.p.to_f64_lossy(), "power")?;
    }
    let n = pairs.len();
    Ok(ErrorReport { n, i: ai.finish(n), v: av.finish(n), p: ap.finish(n) })
}

pub const DEFAULT_SS_TAIL_FRACTION: f64 = 0.2;

/// Transient performance index of a window, in percent.
///
/// The steady-state value is the mean of the last `ss_tail_fraction` of the
/// window (at least one sample); the index is the larger of the normalized
/// overshoot and undershoot relative to it.
pub fn tri<T: Scalar>(window: &[T], ss_tail_fraction: f64) -> Result<T, MetricsError> {
    if window.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(ss_tail_fraction > 0.0 && ss_tail_fraction <= 1.0) {
        return Err(MetricsError::Domain(format!("tail fraction {ss_tail_fraction} outside (0, 1]")));
    }
    let n = window.len();
    let tail = ((n as f64 * ss_tail_fraction).ceil() as usize).clamp(1, n);
    let ssv = window[n - tail..].iter().fold(T::zero(), |s, x| s + *x) / T::from_usize(tail).unwrap();
    if !(ssv > T::zero()) {
        return Err(MetricsError::Domain(format!("steady-state value {ssv} is not positive")));
    }
    let max_v = window.iter().copied().fold(T::neg_infinity(), T::max);
    let min_v = window.iter().copied().fold(T::infinity(), T::min);
    let over = (max_v - ssv) / ssv;
    let under = (ssv - min_v) / ssv;
    Ok(over.max(under) * T::lit(100.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(v: f64, i: f64, pv: f64, pi: f64) -> (Measurement, OperatingPoint) {
        (Measurement::new(0.0, v, i, 25.0), OperatingPoint::new(pv, pi))
    }

    #[test]
    fn perfect_predictions_give_zero() {
        let r = compute_error_report(&[pair(30.0, 8.0, 30.0, 8.0), pair(31.0, 7.0, 31.0, 7.0)]).unwrap();
        for c in [r.i, r.v, r.p] {
            assert_eq!((c.mape, c.rmse, c.min_ape, c.max_ape), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn single_pair_by_hand() {
        let r = compute_error_report(&[pair(10.0, 100.0, 10.0, 99.0)]).unwrap();
        assert!((r.i.mape - 1.0).abs() < 1e-12);
        assert!((r.i.rmse - 1.0).abs() < 1e-12);
        assert_eq!(r.v.mape, 0.0);
    }

    #[test]
    fn empty_and_zero_inputs() {
        assert_eq!(compute_error_report::<f64>(&[]), Err(MetricsError::EmptyInput));
        assert!(matches!(compute_error_report(&[pair(0.0, 1.0, 1.0, 1.0)]), Err(MetricsError::Domain(_))));
    }

    #[test]
    fn relative_errors_use_floors() {
        let d = DarkThresholds::default();
        let m: Measurement = Measurement::new(0.0, 0.5, 10.0, 25.0);
        let e = relative_errors(&m, &OperatingPoint::new(0.0, 9.0), &d);
        assert!((e.i - 0.1).abs() < 1e-15);
        assert!((e.v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tri_hand_window() {
        let w = [100.0, 110.0, 95.0, 100.0, 100.0];
        assert_eq!(tri(&w, 0.2).unwrap(), 10.0);
        assert_eq!(tri(&[5.0; 8], 0.2).unwrap(), 0.0);
    }

    #[test]
    fn tri_domain_errors() {
        assert_eq!(tri::<f64>(&[], 0.2), Err(MetricsError::EmptyInput));
        assert!(tri(&[1.0, -1.0], 0.5).is_err());
        assert!(tri(&[1.0, 1.0], 0.0).is_err());
    }
}
