//! Scalar abstraction for the numerical core.
//!
//! Everything numeric in this crate is generic over [`Real`], so the same
//! solver and loss code runs in `f32` or `f64`. The crate root exports
//! concrete aliases (`Scalar` = `f64`) used by the CLI pipeline, where the
//! conservation and reproducibility tolerances assume double precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a literal; panics on values a float cannot represent (none in practice).
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal converts to Real")
    }

    fn to_f64_cast(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    fn from_usize_cast(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
