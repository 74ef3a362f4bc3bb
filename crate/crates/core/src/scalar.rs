//! Scalar abstraction shared by the numeric kernels.
//!
//! Data containers and the per-column math (imputation, feature functions,
//! summary operations, loss derivatives) are written against [`Scalar`] so
//! the same code serves `f64` and the memory-lean `f32` feature matrices.
//! Model fitting (trees, detectors, samplers) works in `f64` internally and
//! converts at the boundary, as do the FFT and eigen-decomposition paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable throughout the crate.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; never fails for the supported types.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// Lossy conversion from a count.
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
