//! Storage precision for densities, element matrices and stencils.
//!
//! Nodal vectors and every accumulation are `f64`. Coefficient data is held
//! in a [`Storage`] type: `f32` in mixed mode, `f64` in all-double mode.

use serde::{Deserialize, Serialize};

pub trait Storage: Copy + Send + Sync + Default + std::fmt::Debug + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Product evaluated in the storage precision.
    fn mul(self, other: Self) -> Self;
    /// Machine epsilon of the storage type.
    const EPSILON: f64;
}

impl Storage for f32 {
    const EPSILON: f64 = f32::EPSILON as f64;
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn mul(self, other: Self) -> Self {
        self * other
    }
}

impl Storage for f64 {
    const EPSILON: f64 = f64::EPSILON;
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn mul(self, other: Self) -> Self {
        self * other
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Single-precision coefficients, double-precision vectors.
    #[default]
    Mixed,
    Double,
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(Self::Mixed),
            "double" => Ok(Self::Double),
            _ => Err(format!("unknown precision '{s}' (expected mixed|double)")),
        }
    }
}
