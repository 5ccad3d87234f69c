//! Floating-point scalar abstraction shared by the model and solver code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the solvers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Largest accepted deviation of a probability row sum from one.
    const ROW_SUM_TOL: f64;

    /// Rows within this distance of one are kept bit-for-bit instead of renormalized.
    const ROW_EXACT_TOL: f64;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const ROW_SUM_TOL: f64 = 1e-9;
    const ROW_EXACT_TOL: f64 = 1e-12;
}

// f32 cannot represent a 1e-9 deviation from one.
impl Scalar for f32 {
    const ROW_SUM_TOL: f64 = 1e-5;
    const ROW_EXACT_TOL: f64 = 1e-6;
}
