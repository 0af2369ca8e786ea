use std::fmt::{Debug, Display};
use std::ops::AddAssign;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Element dtype recorded in checkpoint manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element type for tensors. Tests run at f64 so finite
/// differences are meaningful; training precision is picked by the config.
pub trait Scalar:
    Float + AddAssign + Debug + Display + Send + Sync + 'static
{
    const DTYPE: Dtype;

    /// Constant conversion from f64 (hyperparameters, literals).
    fn c(v: f64) -> Self;
    fn f64_value(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn c(v: f64) -> Self {
        v as f32
    }

    fn f64_value(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte f32 payload"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn c(v: f64) -> Self {
        v
    }

    fn f64_value(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte f64 payload"))
    }
}
