use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric per-tensor quantization: `real = q * scale`, zero point 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i64,
    pub width: u32,
}

/// An integer code together with whether it had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub value: i64,
    pub saturated: bool,
}

impl QuantParams {
    pub fn new(scale: f64, width: u32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Invalid(format!("quantization scale must be positive, got {scale}")));
        }
        if !(2..=32).contains(&width) {
            return Err(Error::Invalid(format!("unsupported integer width {width}")));
        }
        Ok(QuantParams {
            scale,
            zero_point: 0,
            width,
        })
    }

    /// Scale mapping `maxabs` onto the largest positive code. An all-zero
    /// tensor gets scale 1 so that it still quantizes to zeros.
    pub fn calibrated(maxabs: f64, width: u32) -> Result<Self> {
        let qmax = ((1i64 << (width - 1)) - 1) as f64;
        let scale = if maxabs > 0.0 && maxabs.is_finite() {
            maxabs / qmax
        } else {
            1.0
        };
        QuantParams::new(scale, width)
    }

    pub fn qmin(&self) -> i64 {
        -(1i64 << (self.width - 1))
    }

    pub fn qmax(&self) -> i64 {
        (1i64 << (self.width - 1)) - 1
    }

    pub fn quantize(&self, v: f64) -> Quantized {
        let r = (v / self.scale).round_ties_even();
        let (lo, hi) = (self.qmin(), self.qmax());
        if r.is_nan() {
            return Quantized {
                value: 0,
                saturated: true,
            };
        }
        if r < lo as f64 {
            Quantized {
                value: lo,
                saturated: true,
            }
        } else if r > hi as f64 {
            Quantized {
                value: hi,
                saturated: true,
            }
        } else {
            Quantized {
                value: r as i64 + self.zero_point,
                saturated: false,
            }
        }
    }

    pub fn dequantize(&self, q: i64) -> f64 {
        (q - self.zero_point) as f64 * self.scale
    }

    /// Snap a real onto this grid; the flag reports saturation.
    pub fn snap(&self, v: f64) -> (f64, bool) {
        let q = self.quantize(v);
        (self.dequantize(q.value), q.saturated)
    }

    /// Recover the integer code of an on-grid real.
    pub fn code_of(&self, v: f64) -> i64 {
        (v / self.scale).round_ties_even() as i64
    }

    /// Requantize an integer accumulator whose unit is `acc_scale` into
    /// this grid.
    pub fn requantize(&self, acc: i64, acc_scale: f64) -> Quantized {
        self.quantize(acc as f64 * acc_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w10() -> QuantParams {
        QuantParams::new(1.0 / 511.0, 10).unwrap()
    }

    #[test]
    fn tie_rounds_to_even() {
        let q = w10();
        // 0.5 / (1/511) is exactly 255.5 in binary64.
        assert_eq!(0.5 / q.scale, 255.5);
        assert_eq!(q.quantize(0.5).value, 256);
        let d = q.dequantize(256);
        assert!((d - 256.0 / 511.0).abs() < 1e-15);
        assert!((d - 0.50097847).abs() < 1e-8);
    }

    #[test]
    fn exhaustive_neighbour_check() {
        let q = w10();
        // Distances in units of the scale are exact: |k - 255.5|.
        let best = (q.qmin()..=q.qmax())
            .min_by(|a, b| {
                let da = (*a as f64 - 255.5).abs();
                let db = (*b as f64 - 255.5).abs();
                da.total_cmp(&db).then((a % 2).abs().cmp(&(b % 2).abs()))
            })
            .unwrap();
        assert_eq!(q.quantize(0.5).value, best);
    }

    #[test]
    fn zero_and_saturation() {
        let q = w10();
        assert_eq!(q.quantize(0.0).value, 0);
        assert_eq!(QuantParams::new(3.7, 16).unwrap().quantize(0.0).value, 0);
        let s = q.quantize(10.0);
        assert_eq!(s.value, 511);
        assert!(s.saturated);
        assert_eq!(q.quantize(-10.0).value, -512);
    }

    #[test]
    fn calibration_maps_maxabs_to_qmax() {
        let q = QuantParams::calibrated(2.0, 12).unwrap();
        assert_eq!(q.quantize(2.0).value, 2047);
        assert_eq!(q.quantize(-2.0).value, -2047);
        assert!(QuantParams::new(0.0, 8).is_err());
    }
}
