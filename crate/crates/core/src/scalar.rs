use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of every tensor, parameter and hidden state.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy for `f32`, exact for `f64`.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to every float type")
    }

    fn to_f64_exact(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float widens to f64")
    }

    fn constant(x: f64) -> Self {
        Self::from_f64_lossy(x)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
