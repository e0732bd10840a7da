//! Scalar abstraction shared by every numerical routine in the crate.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real floating-point scalar: `f32` or `f64`.
///
/// Besides the `num-traits` arithmetic, a scalar carries the numerical
/// thresholds used for singularity detection, which depend on the precision.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Condition number above which a linear solve is treated as singular.
    fn singular_cond() -> Self;

    /// Condition number above which integration is slowed down and flagged.
    fn warn_cond() -> Self;

    /// Converts an `f64` literal; every value used in the crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn singular_cond() -> Self {
        1e12
    }
    fn warn_cond() -> Self {
        1e10
    }
}

impl Scalar for f32 {
    fn singular_cond() -> Self {
        1e5
    }
    fn warn_cond() -> Self {
        1e4
    }
}

/// Largest absolute entry of a slice (0 for an empty slice).
pub fn max_abs<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
