use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar the closed-form layers are written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative tolerance for positive-semidefiniteness tests.
    fn psd_tol() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        NumCast::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn psd_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    // 1e-10 is below f32 resolution; use a few hundred ulps instead.
    #[inline]
    fn psd_tol() -> Self {
        1e-5
    }
}
