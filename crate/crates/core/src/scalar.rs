//! Scalar abstraction for the numeric core.

use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point scalar the numeric core is generic over (`f32` or `f64`).
///
/// The shipped experiments and all stated tolerances assume [`crate::Real`]
/// (= `f64`); `f32` is supported for the propagation/pooling math at
/// correspondingly looser tolerances.
pub trait Scalar:
    NdFloat + FromPrimitive + AddAssign + SubAssign + MulAssign + DivAssign
{
}

impl<T> Scalar for T where
    T: NdFloat + FromPrimitive + AddAssign + SubAssign + MulAssign + DivAssign
{
}

/// Lossy `f64` -> scalar conversion for constants and parsed input.
#[inline]
pub(crate) fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 is convertible to every Scalar")
}
