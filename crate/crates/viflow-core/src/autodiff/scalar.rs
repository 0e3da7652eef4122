//! Scalar abstraction so graphs run in either precision.

use num_traits::{Float, NumAssignOps};
use std::fmt::{Debug, Display};

/// Floating-point element type for tensors and tapes. Gradient checks run
/// in f64; training runs in f32.
pub trait Scalar:
    Float + NumAssignOps + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}
