use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type for matrices and tensors: f32 or f64.
///
/// Generic math kernels accept either width; internally they accumulate in
/// f64 (see [`crate::linalg`]) so results are independent of the storage
/// width up to final rounding.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Copy + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to scalar")
    }
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
