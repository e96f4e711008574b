//! Scalar abstraction: everything numeric in this crate is generic over
//! [`Real`], implemented for `f32` and `f64`.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant converts to any Real")
    }

    /// Lossy view as `f64`, for diagnostics and I/O.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
