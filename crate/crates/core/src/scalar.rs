//! Scalar abstraction used by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numeric kernels are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the type cannot represent it,
    /// which never happens for `f32`/`f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Iterative tolerance floor for this precision: `max(base, 100 * eps)`.
    fn tol(base: f64) -> Self {
        let eps = Self::epsilon().as_f64();
        Self::lit(base.max(100.0 * eps))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
