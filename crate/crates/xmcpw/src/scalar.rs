//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`], so the same
//! loss functions, solver and metrics run in `f32` or `f64`. The crate root
//! exports concrete aliases for the common types; the CLI always uses `f64`.

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + FromStr<Err = std::num::ParseFloatError>
    + fmt::Display
    + fmt::Debug
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants baked into formulas.
    #[inline]
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Exact widening to `f64` for formatting and cross-type comparisons.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `max(0, x)`, the positive part used by hinge-style losses.
#[inline]
pub fn positive_part<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        S::zero()
    }
}
