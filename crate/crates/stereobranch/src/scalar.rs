//! Scalar abstraction for the numeric kernels.
//!
//! Everything arithmetic in this crate is generic over [`Real`], which is
//! `f32` or `f64` in practice. `f64` is the default type parameter on all
//! core containers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Storage width of a scalar, used by the float-map codec to pick the
/// on-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatWidth {
    Four,
    Eight,
}

impl FloatWidth {
    pub fn bytes(self) -> usize {
        match self {
            FloatWidth::Four => 4,
            FloatWidth::Eight => 8,
        }
    }
}

/// Floating-point scalar the pipeline can run on.
///
/// The supplied implementations are `f32` and `f64`. Widening to `f64` is
/// exact for both, which the conversions below rely on.
pub trait Real: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    fn width() -> FloatWidth;

    /// Exact widening conversion.
    fn widen(self) -> f64;

    /// Nearest representable value to `v`.
    fn of(v: f64) -> Self;
}

impl Real for f32 {
    fn width() -> FloatWidth {
        FloatWidth::Four
    }

    fn widen(self) -> f64 {
        self as f64
    }

    fn of(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn width() -> FloatWidth {
        FloatWidth::Eight
    }

    fn widen(self) -> f64 {
        self
    }

    fn of(v: f64) -> Self {
        v
    }
}
