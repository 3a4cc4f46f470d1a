//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used for calibrated lengths, ratios, probabilities and statistics.
///
/// Implemented for `f32` and `f64`. Everything that touches files or the CLI
/// runs on `f64`; the `f32` instantiation exists for embedding the measurement
/// and metric code in lower-precision pipelines.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Exact conversion for counts that fit the mantissa, rounded otherwise.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    /// Conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable as float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Maximum of a non-empty iterator under IEEE ordering (NaNs are ignored).
pub(crate) fn max_of<T: Scalar>(it: impl IntoIterator<Item = T>) -> Option<T> {
    it.into_iter().fold(None, |acc, v| match acc {
        None => Some(v),
        Some(m) => Some(if v > m { v } else { m }),
    })
}

pub(crate) fn min_of<T: Scalar>(it: impl IntoIterator<Item = T>) -> Option<T> {
    it.into_iter().fold(None, |acc, v| match acc {
        None => Some(v),
        Some(m) => Some(if v < m { v } else { m }),
    })
}
