//! Closed-form sharp bounds and reference formulas, in numerically stable
//! forms.

use thiserror::Error;

use crate::scalar::{c, std_normal_pdf, std_normal_survival, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BoundsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("upcrossing bound needs x < b <= x + sigma, got x={x}, b={b}, sigma={sigma}")]
    OutOfRegime { x: f64, b: f64, sigma: f64 },
    #[error("level {x} lies outside [{lo}, {hi}]")]
    OutOfInterval { x: f64, lo: f64, hi: f64 },
    #[error("formula applies for x >= 0 only, got {x}")]
    NegativeX { x: f64 },
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Sharp upper bound on expected local time at `x` for final variance
/// sigma^2: sqrt(sigma^2 + x^2) - |x|, computed in the rationalized form
/// sigma^2 / (sqrt(sigma^2 + x^2) + |x|), which does not cancel for
/// |x| >> sigma.
pub fn sharp_bound<T: Scalar>(x: T, sigma: T) -> Result<T, BoundsError> {
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(BoundsError::NonPositive { name: "sigma", value: to_f64(sigma) });
    }
    let ax = x.abs();
    let s = (sigma * sigma + x * x).sqrt();
    Ok(sigma * sigma / (s + ax))
}

/// Sharp upper bound on the expected number of upcrossings of (x, b) in the
/// regime b - x <= sigma: sharp_bound(x, sigma) / (2 (b - x)). No formula is
/// available outside the regime.
pub fn upcrossing_bound<T: Scalar>(x: T, b: T, sigma: T) -> Result<T, BoundsError> {
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(BoundsError::NonPositive { name: "sigma", value: to_f64(sigma) });
    }
    if !(b > x && b - x <= sigma) {
        return Err(BoundsError::OutOfRegime {
            x: to_f64(x),
            b: to_f64(b),
            sigma: to_f64(sigma),
        });
    }
    Ok(sharp_bound(x, sigma)? / (c::<T>(2.0) * (b - x)))
}

/// Expected local time at x for the first exit from (-a, b):
/// 2a(b - x)/(a + b) on [0, b], mirrored on [-a, 0].
pub fn closed_form_first_exit<T: Scalar>(a: T, b: T, x: T) -> Result<T, BoundsError> {
    if !(a > T::zero()) {
        return Err(BoundsError::NonPositive { name: "a", value: to_f64(a) });
    }
    if !(b > T::zero()) {
        return Err(BoundsError::NonPositive { name: "b", value: to_f64(b) });
    }
    if x < -a || x > b {
        return Err(BoundsError::OutOfInterval {
            x: to_f64(x),
            lo: -to_f64(a),
            hi: to_f64(b),
        });
    }
    let two = c::<T>(2.0);
    if x >= T::zero() {
        Ok(two * a * (b - x) / (a + b))
    } else {
        Ok(two * b * (a + x) / (a + b))
    }
}

/// Expected local time at x for a centered normal terminal law:
/// 2 sigma phi(x/sigma) - 2 |x| Phi-bar(|x|/sigma); even in x.
pub fn closed_form_normal<T: Scalar>(sigma: T, x: T) -> Result<T, BoundsError> {
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(BoundsError::NonPositive { name: "sigma", value: to_f64(sigma) });
    }
    let u = x.abs() / sigma;
    let two = c::<T>(2.0);
    Ok(two * sigma * std_normal_pdf(u) - two * x.abs() * std_normal_survival(u))
}

/// Expected local time at x >= 0 for the shifted exponential terminal law:
/// sigma (2/e) exp(-x/sigma).
pub fn closed_form_exponential<T: Scalar>(sigma: T, x: T) -> Result<T, BoundsError> {
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(BoundsError::NonPositive { name: "sigma", value: to_f64(sigma) });
    }
    if x < T::zero() {
        return Err(BoundsError::NegativeX { x: to_f64(x) });
    }
    Ok(sigma * c::<T>(2.0) * (-(T::one() + x / sigma)).exp())
}

/// How a reference value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueSource {
    Exact,
    Mc,
}

/// A bound next to a reference value, with their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport<T> {
    pub x: T,
    pub sigma: T,
    pub bound: T,
    pub reference_value: T,
    pub ratio: T,
    pub source: ValueSource,
}

impl<T: Scalar> BoundReport<T> {
    pub fn new(x: T, sigma: T, reference_value: T, source: ValueSource) -> Result<Self, BoundsError> {
        let bound = sharp_bound(x, sigma)?;
        Ok(Self { x, sigma, bound, reference_value, ratio: reference_value / bound, source })
    }
}
