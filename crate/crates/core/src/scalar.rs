use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + Default + 'static {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn to_f64_(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// A tolerance stated for `f64` rescaled to this type's machine epsilon.
    ///
    /// For `f64` this is the identity; for `f32` the tolerance is widened by
    /// the ratio of the two epsilons.
    fn tol(x: f64) -> Self {
        let ratio = Self::epsilon().to_f64_() / f64::EPSILON;
        Self::lit(x * ratio)
    }
}

impl Real for f32 {}
impl Real for f64 {}
