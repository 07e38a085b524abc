//! Floating-point abstraction for the numerical kernels.

use num_traits::{Float, FromPrimitive};
use std::fmt;

/// Scalar bound for every numerical kernel in the crate.
///
/// `f32` and `f64` both qualify. Algorithms state their tolerances in `f64`
/// literals converted through [`real`], so `f32` runs are only meaningful
/// where the caller rescales tolerances to single precision.
pub trait Scalar:
    Float + FromPrimitive + fmt::Debug + fmt::Display + fmt::LowerExp + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn real<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 converts into any Scalar")
}
