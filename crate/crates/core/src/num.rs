//! Scalar abstraction for the numeric core.
//!
//! Integration, statistics, least squares, and frontier scans only need
//! floating-point arithmetic, so they are written against [`Real`] and work
//! for both `f32` and `f64`. The pipeline instantiates them at
//! [`crate::Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable by the numeric core.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + Sum
    + Debug
    + Display
    + Copy
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`, for literals inside generic code.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Real")
    }

    /// Lossy conversion to `f64`, for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Halves a value without requiring literal support on `R`.
pub fn half<R: Real>(value: R) -> R {
    value / R::of(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_for_both_widths() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(1.5f64.to_f64_lossy(), 1.5);
        assert!((1.5f32.to_f64_lossy() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn half_is_exact_for_dyadics() {
        assert_eq!(half(3.0f64), 1.5);
        assert_eq!(half(3.0f32), 1.5f32);
    }
}
