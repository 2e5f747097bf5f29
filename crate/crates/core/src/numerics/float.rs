use super::Rounded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingMode {
    NearestEven,
    TowardZero,
}

/// A binary floating-point grid with `precision` significand bits
/// (implicit bit included) and normal exponents in `[emin, emax]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloatFormat {
    pub precision: i32,
    pub emin: i32,
    pub emax: i32,
}

pub const BINARY32: FloatFormat = FloatFormat {
    precision: 24,
    emin: -126,
    emax: 127,
};

pub const BINARY16: FloatFormat = FloatFormat {
    precision: 11,
    emin: -14,
    emax: 15,
};

/// FP32 with a 7-bit stored mantissa.
pub const BFLOAT16: FloatFormat = FloatFormat {
    precision: 8,
    emin: -126,
    emax: 127,
};

impl FloatFormat {
    pub fn max_finite(&self) -> f64 {
        (2.0 - libm::ldexp(1.0, 1 - self.precision)) * libm::ldexp(1.0, self.emax)
    }

    /// Smallest positive subnormal.
    pub fn min_positive(&self) -> f64 {
        libm::ldexp(1.0, self.emin - (self.precision - 1))
    }

    /// Spacing of the grid around `a`, which must be finite and nonzero.
    pub fn quantum(&self, a: f64) -> f64 {
        let (_, exp) = libm::frexp(a);
        let e = (exp - 1).max(self.emin);
        libm::ldexp(1.0, e - (self.precision - 1))
    }

    pub fn round(&self, v: f64, mode: RoundingMode) -> Rounded {
        if v == 0.0 || !v.is_finite() {
            return Rounded::exact(v);
        }
        let a = v.abs();
        let q = self.quantum(a);
        // Division and multiplication by a power of two are exact here.
        let steps = a / q;
        let steps = match mode {
            RoundingMode::NearestEven => steps.round_ties_even(),
            RoundingMode::TowardZero => steps.trunc(),
        };
        let r = steps * q;
        if r > self.max_finite() {
            return Rounded {
                value: f64::INFINITY.copysign(v),
                overflow: true,
            };
        }
        Rounded::exact(r.copysign(v))
    }

    pub fn contains(&self, v: f64) -> bool {
        !v.is_finite() || self.round(v, RoundingMode::TowardZero).value == v
    }
}
