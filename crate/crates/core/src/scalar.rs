use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type used throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossless for `f32` and `f64` alike; used by the model file writer.
    fn to_f64_lossless(self) -> f64;

    /// Rounds to the nearest representable value.
    fn from_f64_lossy(v: f64) -> Self;

    /// Converts a count; exact for values below the mantissa width.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in a float")
    }

    /// Name written into model headers.
    const NAME: &'static str;
}

impl Scalar for f32 {
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    const NAME: &'static str = "f64";
}
