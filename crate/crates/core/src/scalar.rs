//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the network, loss, optimizer and bound are generic over.
///
/// Implemented for `f32` and `f64`. Serialization bounds are part of the trait
/// so checkpoints and reports work for either precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Rounds for `f32`.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
