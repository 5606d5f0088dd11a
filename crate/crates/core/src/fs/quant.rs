use serde::{Deserialize, Serialize};

use super::FsParams;
use crate::{Error, Result};

/// `2^Q` equally spaced levels covering `[range_low, range_high]`, both
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub bits: u32,
    pub range_low: f64,
    pub range_high: f64,
}

impl QuantizationSpec {
    /// `Q` bits on the default range `[-8, 8]`.
    pub fn new(bits: u32) -> Self {
        QuantizationSpec {
            bits,
            range_low: -8.0,
            range_high: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 52 {
            return Err(Error::invalid(
                "quantization",
                format!("bits must be in 1..=52, got {}", self.bits),
            ));
        }
        if !(self.range_low < self.range_high)
            || !self.range_low.is_finite()
            || !self.range_high.is_finite()
        {
            return Err(Error::invalid(
                "quantization",
                format!(
                    "range [{}, {}] must be finite with low < high",
                    self.range_low, self.range_high
                ),
            ));
        }
        Ok(())
    }

    pub fn num_levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn spacing(&self) -> f64 {
        (self.range_high - self.range_low) / (self.num_levels() - 1) as f64
    }

    /// Value of level `index` (0-based); the last level is exactly `range_high`.
    pub fn level(&self, index: u64) -> f64 {
        if index + 1 >= self.num_levels() {
            self.range_high
        } else {
            self.range_low + index as f64 * self.spacing()
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_levels()).map(|i| self.level(i))
    }

    /// Snaps `v` to the nearest level, clamping outside the range. Ties go to
    /// the lower level.
    pub fn snap(&self, v: f64) -> f64 {
        if v <= self.range_low {
            return self.range_low;
        }
        if v >= self.range_high {
            return self.range_high;
        }
        let pos = (v - self.range_low) / self.spacing();
        let lower = (pos.floor() as u64).min(self.num_levels() - 1);
        let upper = (lower + 1).min(self.num_levels() - 1);
        let (lo, hi) = (self.level(lower), self.level(upper));
        if hi - v < v - lo {
            hi
        } else {
            lo
        }
    }
}

/// Snaps every entry of `T`, `h` and `d` onto the quantization grid.
pub fn quantize_params(params: &FsParams, q: &QuantizationSpec) -> Result<FsParams> {
    q.validate()?;
    params.map_entries(|v| q.snap(v))
}
