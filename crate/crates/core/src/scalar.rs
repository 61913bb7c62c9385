//! Scalar abstraction used throughout the crate.
//!
//! Core numerics are written against [`Real`] rather than a concrete float so
//! the same code instantiates at `f32` or `f64`. The harness and the acceptance
//! tolerances assume `f64`; `f32` is supported for the core math but not
//! recommended for the full optimization loop.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar with the conversions and bounds the engine needs.
///
/// Implemented for `f32` and `f64` via the blanket impl.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    ///
    /// Panics if the value is not representable (cannot happen for `f32`/`f64`,
    /// which saturate to infinities instead).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert into Real scalar")
    }

    /// Lossy conversion back to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real scalar must convert into f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}
