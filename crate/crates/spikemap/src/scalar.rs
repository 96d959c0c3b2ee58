//! Floating-point scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the tensor, kernel, and autodiff layers are generic over.
///
/// Implemented for `f32` and `f64`. The domain layers pin `f64`; `f32` is
/// used for checkpoint storage and available for callers that want the
/// smaller footprint.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Copy + Send + Sync + 'static
{
    /// Converts from `f64`, the precision all constants are written in.
    #[inline]
    fn from_f64_c(v: f64) -> Self {
        // from_f64 is total for the float impls of FromPrimitive.
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }

    /// Widens to `f64` for reporting and serialization.
    #[inline]
    fn to_f64_c(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
