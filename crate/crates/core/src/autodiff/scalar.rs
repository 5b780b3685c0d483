//! Element types tensors can hold: `f32` for training, `f64` for oracles
//! and gradient checks.

use std::fmt::{Debug, Display};

/// Floating-point element of a [`crate::Tensor`].
pub trait Element:
    num_traits::Float + num_traits::NumAssignOps + Send + Sync + Debug + Display + 'static
{
    /// Name recorded in checkpoint headers.
    const DTYPE: &'static str;
    /// Bytes per element in checkpoint payloads.
    const BYTES: usize;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
}

/// Shorthand for `Element::from_f64`, used heavily in math code.
#[inline]
pub fn el<R: Element>(x: f64) -> R {
    R::from_f64(x)
}
