//! Floating-point abstraction for the numeric kernels.
//!
//! Everything that is "just math" (normalization, the conv-LSTM, the
//! sequence-length search, metrics) is generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`. The shipped pipeline instantiates `f64`:
//! training has to survive a 1e-4 gradient-check bar, which single precision
//! does not reliably clear.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar type the numeric kernels are written against.
///
/// Implemented for `f32` and `f64` via the blanket impl; the bounds are the
/// union of what the kernels actually need (float math, literal conversion,
/// summation, serde for checkpoints).
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    ///
    /// Panics only if the target type cannot represent any approximation of
    /// the value, which cannot happen for finite literals and f32/f64.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal converts to any float scalar")
    }

    /// Widens to `f64` for reporting and serialization boundaries.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float scalar widens to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
