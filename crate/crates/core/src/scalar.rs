//! Floating-point scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating point sample type: `f32` or `f64`.
///
/// All images, operators, schedules and samplers are generic over this trait.
/// `f64` is the working precision used by the CLI and the acceptance suite.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + FftNum + Default + Display + Debug + Send + Sync + 'static
{
    /// Relative residual at which conjugate gradients stops by default.
    const CG_TOLERANCE: f64;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const CG_TOLERANCE: f64 = 1e-5;
}

impl Scalar for f64 {
    const CG_TOLERANCE: f64 = 1e-8;
}
