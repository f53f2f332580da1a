//! Floating-point abstraction shared by the model, filtering and solver code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for probabilities, rewards and values: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Tolerance used when checking that distributions sum to one.
///
/// `1e-9` for `f64`; the single-precision epsilon scale for `f32`.
pub fn normalization_tolerance<T: Scalar>() -> T {
    let tol = T::epsilon() * T::cast(64.0);
    tol.max(T::cast(1e-9))
}
