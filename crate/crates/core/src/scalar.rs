//! Scalar abstraction shared by every geometric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the geometry, attention and metric code.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the precision of
/// the underlying type live here so that validation code stays generic.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Tolerance for rotation orthonormality / determinant checks.
    fn validation_tolerance() -> Self;

    /// Smallest baseline length accepted when building a fundamental matrix.
    fn baseline_tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f64 {
    fn validation_tolerance() -> Self {
        1e-9
    }

    fn baseline_tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn validation_tolerance() -> Self {
        1e-5
    }

    fn baseline_tolerance() -> Self {
        1e-6
    }
}
