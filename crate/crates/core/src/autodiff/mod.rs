//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! Every tensor is rank 2 (`[rows, cols]`); a scalar is `[1, 1]` and a vector
//! is a single row. Forward operations append records to a [`Tape`]; calling
//! [`Tape::backward`] on a scalar walks the records in reverse and returns a
//! [`Gradients`] table. The element type is generic so training can run in
//! `f32` while gradient checks run in `f64`.

mod adam;
pub mod kernels;
mod matrix;
mod tape;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub use adam::{Adam, AdamConfig};
pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Tensor};

/// Floating point element type usable on a tape.
pub trait Scalar:
    Float + Debug + Default + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
