//! Principal real branch of the Lambert W function.
//!
//! W₀(x) is the solution w ≥ −1 of w·eʷ = x for x ≥ −1/e. The starting point
//! is a branch-point series near −1/e, a logarithmic estimate on the middle
//! range and the asymptotic `ln x − ln ln x` form above e; Halley's iteration
//! then refines it to machine precision, usually in two or three steps.

use crate::error::ModelError;
use crate::scalar::Scalar;

const MAX_ITERATIONS: usize = 24;

/// Evaluates W₀(x).
///
/// Returns [`ModelError::Domain`] below the branch point −1/e, for NaN and
/// for +∞. Inputs within a few ulps under −1/e are snapped to the branch
/// point and return −1.
pub fn lambert_w0<T: Scalar>(x: T) -> Result<T, ModelError> {
    let one = T::one();
    let e = T::E();
    let branch = -one / e;

    if x.is_nan() {
        return Err(ModelError::Domain("lambert_w0 of NaN".into()));
    }
    if x.is_infinite() {
        return Err(ModelError::Domain(format!("lambert_w0 argument overflow ({x})")));
    }
    if x < branch {
        if branch - x <= T::lit(8.0) * T::epsilon() * branch.abs() {
            return Ok(-one);
        }
        return Err(ModelError::Domain(format!("lambert_w0 argument {x} below -1/e")));
    }
    if x == T::zero() {
        return Ok(x);
    }
    // e·x + 1 vanishes at the branch point
    let near_branch = e * x + one;
    if near_branch <= T::zero() {
        return Ok(-one);
    }

    let mut w = initial_guess(x, near_branch);
    let two = T::lit(2.0);
    let tol = T::lit(4.0) * T::epsilon();

    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let wp1 = w + one;
        if wp1 == T::zero() {
            break;
        }
        let step = if (w * ew).is_finite() && (ew * wp1).is_finite() {
            let f = w * ew - x;
            if f == T::zero() {
                break;
            }
            let denom = ew * wp1 - (w + two) * f / (two * wp1);
            f / denom
        } else {
            // Newton on w + ln w − ln x, which never overflows
            (w + w.ln() - x.ln()) / (one + one / w)
        };
        if !step.is_finite() {
            break;
        }
        w = w - step;
        if step.abs() <= tol * w.abs().max(T::min_positive_value()) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess<T: Scalar>(x: T, near_branch: T) -> T {
    let one = T::one();
    if x < T::lit(-0.25) {
        // series in p = sqrt(2(e·x + 1)) about the branch point
        let p = (T::lit(2.0) * near_branch).sqrt();
        return -one + p - p * p / T::lit(3.0) + T::lit(11.0 / 72.0) * p * p * p;
    }
    if x.abs() < T::lit(1e-3) {
        return x - x * x + T::lit(1.5) * x * x * x;
    }
    if x <= T::E() {
        let l = x.ln_1p();
        return l * (one - (one + l).ln() / (T::lit(2.0) + l));
    }
    let l1 = x.ln();
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}
