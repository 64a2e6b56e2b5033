use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used by every numeric routine in the crate.
///
/// Implemented for `f32` and `f64`. Images, descriptors and solvers are all
/// generic over it; the `*64`/`*32` aliases at the crate root pick one.
pub trait Real:
    NdFloat + FromPrimitive + ToPrimitive + Sum + Default + Display + Debug + LowerExp + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
