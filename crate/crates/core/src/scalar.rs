//! Scalar abstraction for the estimator math.
//!
//! Everything numerical in this crate is generic over [`Scalar`], so the same
//! estimators run in `f32` or `f64`. The I/O and simulation layers work in
//! `f64` and convert at the edges.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every estimator in this crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for constants.
    fn from_f(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant representable as scalar")
    }

    /// Lossy conversion to `f64`, for reporting.
    fn into_f(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    fn from_usize_(v: usize) -> Self {
        Self::from_f(v as f64)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
