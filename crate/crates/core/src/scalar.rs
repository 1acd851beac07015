//! Floating-point scalar abstraction shared by the numeric parts of the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by embeddings, models and score matrices: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossless widening to `f64` (exact for both supported types).
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("f32/f64 always convert to f64")
    }

    /// Conversion from a literal or an `f64` computation.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
