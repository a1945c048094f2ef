//! Signed fixed-point formats in the `ap_fixed<T, I>` convention.
//!
//! `T` is the total bit width and `I` the number of integer bits, sign bit
//! included. A format covers the grid `k * 2^(I - T)` for integer
//! `k ∈ [-2^(T-1), 2^(T-1) - 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid fixed-point format ({total_bits},{integer_bits}): require 1 <= I <= T <= 64")]
pub struct FormatError {
    pub total_bits: u32,
    pub integer_bits: u32,
}

/// A fixed-point precision pair `(total bits, integer bits)`.
///
/// Serialized as a two-element list, e.g. `[16, 6]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u32, u32)", into = "(u32, u32)")]
pub struct FixedPointFormat {
    total_bits: u32,
    integer_bits: u32,
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, integer_bits: u32) -> Result<Self, FormatError> {
        if integer_bits < 1 || integer_bits > total_bits || total_bits > 64 {
            return Err(FormatError { total_bits, integer_bits });
        }
        Ok(Self { total_bits, integer_bits })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn integer_bits(&self) -> u32 {
        self.integer_bits
    }

    pub fn fractional_bits(&self) -> i32 {
        self.total_bits as i32 - self.integer_bits as i32
    }

    /// Grid spacing `2^(I - T)`.
    pub fn resolution(&self) -> f64 {
        (2.0f64).powi(-self.fractional_bits())
    }

    /// Smallest and largest integer codes.
    fn code_bounds(&self) -> (f64, f64) {
        let half = (2.0f64).powi(self.total_bits as i32 - 1);
        (-half, half - 1.0)
    }

    pub fn min_value(&self) -> f64 {
        self.code_bounds().0 * self.resolution()
    }

    pub fn max_value(&self) -> f64 {
        self.code_bounds().1 * self.resolution()
    }

    pub fn in_range(&self, x: f64) -> bool {
        x >= self.min_value() && x <= self.max_value()
    }

    /// Nearest grid point, ties to even, saturating at the range ends.
    pub fn quantize(&self, x: f64) -> f64 {
        self.code(x) * self.resolution()
    }

    /// Integer code of the nearest grid point.
    pub fn encode(&self, x: f64) -> i64 {
        self.code(x) as i64
    }

    pub fn decode(&self, code: i64) -> f64 {
        code as f64 * self.resolution()
    }

    /// True when `x` is exactly representable.
    pub fn on_grid(&self, x: f64) -> bool {
        let steps = x / self.resolution();
        let (lo, hi) = self.code_bounds();
        steps.fract() == 0.0 && steps >= lo && steps <= hi
    }

    fn code(&self, x: f64) -> f64 {
        let (lo, hi) = self.code_bounds();
        (x / self.resolution()).round_ties_even().clamp(lo, hi)
    }
}

/// Free-function form of [`FixedPointFormat::quantize`].
pub fn quantize_value(x: f64, fmt: FixedPointFormat) -> f64 {
    fmt.quantize(x)
}

impl TryFrom<(u32, u32)> for FixedPointFormat {
    type Error = FormatError;

    fn try_from((t, i): (u32, u32)) -> Result<Self, Self::Error> {
        Self::new(t, i)
    }
}

impl From<FixedPointFormat> for (u32, u32) {
    fn from(f: FixedPointFormat) -> Self {
        (f.total_bits, f.integer_bits)
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ap_fixed<{},{}>", self.total_bits, self.integer_bits)
    }
}
