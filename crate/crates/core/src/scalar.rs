//! Scalar abstraction for the math layers.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! harness and CLI pin [`crate::Real`] = `f64`. Validation gates scale with
//! the type so that `f32` instantiations stay usable.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Complementary error function at the full precision of the type.
    fn erfc(self) -> Self;
    /// Gate for probability-mass and mean-zero validation.
    fn mass_tol() -> Self;
    /// Gate for law-equality comparisons (embedding round trips).
    fn law_tol() -> Self;
}

impl Scalar for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    fn mass_tol() -> Self {
        1e-12
    }
    fn law_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    fn mass_tol() -> Self {
        1e-5
    }
    fn law_tol() -> Self {
        1e-4
    }
}

/// Pull an `f64` constant into the scalar type.
#[inline]
pub(crate) fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable in scalar type")
}

/// Standard normal density.
#[inline]
pub(crate) fn std_normal_pdf<T: Scalar>(z: T) -> T {
    (-z * z / c(2.0)).exp() / (c::<T>(2.0) * T::PI()).sqrt()
}

/// Standard normal survival function, via the complementary error function.
#[inline]
pub(crate) fn std_normal_survival<T: Scalar>(z: T) -> T {
    (z / T::SQRT_2()).erfc() / c(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_matches_tabulated_values() {
        // reference values from the 15-digit tables
        assert!((std_normal_survival(0.0f64) - 0.5).abs() < 1e-15);
        assert!((std_normal_survival(1.0f64) - 0.158655253931457).abs() < 1e-14);
        let far: f64 = std_normal_survival(5.0);
        assert!((far - 2.866515718791939e-7).abs() / far < 1e-12);
    }

    #[test]
    fn pdf_at_zero() {
        let p: f64 = std_normal_pdf(0.0);
        assert!((p - 0.3989422804014327).abs() < 1e-15);
    }

    #[test]
    fn f32_instantiation_works() {
        let p: f32 = std_normal_pdf(0.0f32);
        assert!((p - 0.398_942_3).abs() < 1e-6);
    }
}
