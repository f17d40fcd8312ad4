//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point type usable throughout the crate: `f32` or `f64`.
///
/// Everything that touches linear algebra is written against this trait so the
/// same code runs in single or double precision. File formats always store
/// 64-bit values and convert on the way in and out.
pub trait Real:
    RealField + Copy + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`, rounding if necessary.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Widens to `f64`; NaN if the conversion is not representable.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Total order used wherever scalars are sorted or pushed into heaps.
/// NaN compares equal to everything, so callers validate finiteness first.
#[inline]
pub(crate) fn total_cmp<T: Real>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}
