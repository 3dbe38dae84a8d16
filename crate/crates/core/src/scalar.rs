//! Floating-point abstraction shared by the analytic and estimation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar usable by the decay laws, estimators, fitting and CDFs.
///
/// Implemented for `f32` and `f64`. The simulator itself is fixed to `f64`
/// because its oracle comparisons are made at 1e-12.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; panics only for values the type cannot hold.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("integer representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Integer power with a depth argument.
pub(crate) fn powu<T: Scalar>(base: T, exp: usize) -> T {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(T::from_usize_lossy(exp)),
    }
}
