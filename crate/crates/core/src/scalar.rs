//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Real scalar the model and controllers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// `[x]^+`
    #[inline]
    fn pos(self) -> Self {
        self.max(Self::zero())
    }

    /// Machine-noise tolerance used when comparing accumulated quantities.
    fn noise() -> Self;
}

impl Scalar for f32 {
    fn noise() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn noise() -> Self {
        1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_part() {
        assert_eq!((-2.0f64).pos(), 0.0);
        assert_eq!(3.5f32.pos(), 3.5);
        assert_eq!(<f64 as Scalar>::lit(0.25), 0.25);
    }
}
