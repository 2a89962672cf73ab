//! Scalar abstraction shared by the single- and double-precision paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used for compute. Implemented for `f32` (training
/// kernels) and `f64` (reference path).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const BYTES: usize;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn write_le(self, out: &mut Vec<u8>);

    /// Reads one value from the front of `bytes`. Caller guarantees length.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Precision at which entity rows are held in shard memory and moved over
/// the fabric. Compute precision is the `Real` type parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoragePrecision {
    Half,
    Single,
    Double,
}

impl StoragePrecision {
    pub fn bytes(self) -> usize {
        match self {
            StoragePrecision::Half => 2,
            StoragePrecision::Single => 4,
            StoragePrecision::Double => 8,
        }
    }

    /// Rounds `x` to the nearest value representable at this precision.
    #[inline]
    pub fn quantize<T: Real>(self, x: T) -> T {
        match self {
            StoragePrecision::Half => {
                T::lit(half::f16::from_f64(x.as_f64()).to_f64())
            }
            StoragePrecision::Single => T::lit(x.as_f64() as f32 as f64),
            StoragePrecision::Double => x,
        }
    }

    pub fn quantize_slice<T: Real>(self, xs: &mut [T]) {
        if self == StoragePrecision::Double || (self == StoragePrecision::Single && T::BYTES == 4) {
            return;
        }
        for x in xs {
            *x = self.quantize(*x);
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StoragePrecision::Half => "half",
            StoragePrecision::Single => "single",
            StoragePrecision::Double => "double",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "half" => Some(StoragePrecision::Half),
            "single" => Some(StoragePrecision::Single),
            "double" => Some(StoragePrecision::Double),
            _ => None,
        }
    }
}
