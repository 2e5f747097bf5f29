//! Machine number representations and scalar operation semantics.
//!
//! Every value is carried in an `f64` that lies on the grid of its target
//! representation. Narrower floating-point formats are emulated by rounding
//! the exact `f64` result of each operation; `f64` has at least `2p + 2`
//! significand bits for every narrower format, so the double rounding is
//! innocuous for `+ - * /`.

mod accumulate;
mod float;
mod quant;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use accumulate::accumulate;
pub use float::{FloatFormat, RoundingMode, BFLOAT16, BINARY16, BINARY32};
pub use quant::{QuantParams, Quantized};

/// Machine number representations supported by the interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Representation {
    #[serde(rename = "FP64")]
    Fp64,
    #[serde(rename = "FP32")]
    Fp32,
    #[serde(rename = "FP16")]
    Fp16,
    #[serde(rename = "BF16")]
    Bf16,
    #[serde(rename = "INT16")]
    Int16,
    #[serde(rename = "INT14")]
    Int14,
    #[serde(rename = "INT12")]
    Int12,
    #[serde(rename = "INT10")]
    Int10,
}

impl Representation {
    pub const ALL: [Representation; 8] = [
        Representation::Fp64,
        Representation::Fp32,
        Representation::Fp16,
        Representation::Bf16,
        Representation::Int16,
        Representation::Int14,
        Representation::Int12,
        Representation::Int10,
    ];

    pub fn is_float(self) -> bool {
        self.int_width().is_none()
    }

    /// Significand precision in bits, implicit bit included.
    pub fn precision_bits(self) -> Option<u32> {
        match self {
            Representation::Fp64 => Some(53),
            Representation::Fp32 => Some(24),
            Representation::Fp16 => Some(11),
            Representation::Bf16 => Some(8),
            _ => None,
        }
    }

    pub fn exponent_bits(self) -> Option<u32> {
        match self {
            Representation::Fp64 => Some(11),
            Representation::Fp32 | Representation::Bf16 => Some(8),
            Representation::Fp16 => Some(5),
            _ => None,
        }
    }

    pub fn int_width(self) -> Option<u32> {
        match self {
            Representation::Int16 => Some(16),
            Representation::Int14 => Some(14),
            Representation::Int12 => Some(12),
            Representation::Int10 => Some(10),
            _ => None,
        }
    }

    /// Inclusive integer range of an INT kind.
    pub fn int_range(self) -> Option<(i64, i64)> {
        self.int_width()
            .map(|b| (-(1i64 << (b - 1)), (1i64 << (b - 1)) - 1))
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Fp64 => "FP64",
            Representation::Fp32 => "FP32",
            Representation::Fp16 => "FP16",
            Representation::Bf16 => "BF16",
            Representation::Int16 => "INT16",
            Representation::Int14 => "INT14",
            Representation::Int12 => "INT12",
            Representation::Int10 => "INT10",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::schema("representation", format!("unknown representation `{s}`")))
    }
}

/// Reduction order used for sums (dot products included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumulationMode {
    /// Strict left-to-right fold.
    #[default]
    #[serde(rename = "naive")]
    NaiveLtr,
    /// Recursive halving tree.
    Pairwise,
    /// Compensated summation (Neumaier's variant of Kahan's algorithm).
    Kahan,
}

impl fmt::Display for AccumulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccumulationMode::NaiveLtr => "naive",
            AccumulationMode::Pairwise => "pairwise",
            AccumulationMode::Kahan => "kahan",
        })
    }
}

impl FromStr for AccumulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" | "naiveltr" | "ltr" => Ok(AccumulationMode::NaiveLtr),
            "pairwise" => Ok(AccumulationMode::Pairwise),
            "kahan" => Ok(AccumulationMode::Kahan),
            _ => Err(Error::schema("accumulation", format!("unknown accumulation mode `{s}`"))),
        }
    }
}

/// A value on a representation grid, with the overflow flag of the
/// operation that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rounded {
    pub value: f64,
    pub overflow: bool,
}

impl Rounded {
    pub const fn exact(value: f64) -> Self {
        Rounded {
            value,
            overflow: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryFn {
    Exp,
    Tanh,
    Sigmoid,
    Relu,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Exp => "exp",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Sigmoid => "sigmoid",
            UnaryFn::Relu => "relu",
        }
    }

    /// The reference `f64` evaluation. Uses the portable `libm` routines so
    /// results do not depend on the host C library.
    pub fn eval_f64(self, x: f64) -> f64 {
        match self {
            UnaryFn::Exp => libm::exp(x),
            UnaryFn::Tanh => libm::tanh(x),
            UnaryFn::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
            UnaryFn::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rounds `v` onto the grid of a floating-point representation.
///
/// FP32 and FP16 round to nearest, ties to even, overflowing to infinity
/// and underflowing gradually through subnormals. BF16 truncates the FP32
/// encoding. INT kinds have no fixed grid (see [`QuantParams`]); `v` is
/// returned unchanged for them.
pub fn round_to(repr: Representation, v: f64) -> Rounded {
    if !v.is_finite() {
        return Rounded::exact(v);
    }
    match repr {
        Representation::Fp64 => Rounded::exact(v),
        Representation::Fp32 => {
            let r = v as f32 as f64;
            Rounded {
                value: r,
                overflow: r.is_infinite(),
            }
        }
        Representation::Fp16 => BINARY16.round(v, RoundingMode::NearestEven),
        Representation::Bf16 => {
            let wide = v as f32 as f64;
            if wide.is_infinite() {
                return Rounded {
                    value: wide,
                    overflow: true,
                };
            }
            BFLOAT16.round(wide, RoundingMode::TowardZero)
        }
        _ => Rounded::exact(v),
    }
}

/// One basic operation at precision `repr`: the exact result rounded once.
pub fn fp_op(repr: Representation, op: BinOp, a: f64, b: f64) -> Rounded {
    let exact = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
    };
    let mut out = round_to(repr, exact);
    if !exact.is_finite() && a.is_finite() && b.is_finite() {
        out.overflow = true;
    }
    out
}

/// Elementary function at precision `repr`: the `f64` value rounded into
/// `repr`. ReLU is exact.
pub fn transcendental(repr: Representation, f: UnaryFn, x: f64) -> Rounded {
    if f == UnaryFn::Relu {
        return Rounded::exact(f.eval_f64(x));
    }
    let wide = f.eval_f64(x);
    let mut out = round_to(repr, wide);
    if wide.is_infinite() && x.is_finite() {
        out.overflow = true;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representation_table() {
        assert_eq!(Representation::Fp16.precision_bits(), Some(11));
        assert_eq!(Representation::Bf16.exponent_bits(), Representation::Fp32.exponent_bits());
        assert_eq!(Representation::Int10.int_range(), Some((-512, 511)));
        assert_eq!(Representation::Int16.int_range(), Some((-32768, 32767)));
        assert_eq!("bf16".parse::<Representation>().unwrap(), Representation::Bf16);
        assert!("fp8".parse::<Representation>().is_err());
    }

    #[test]
    fn round_to_examples() {
        assert_eq!(round_to(Representation::Fp32, 1.5).value, 1.5);
        assert_eq!(round_to(Representation::Fp16, 0.1).value, 0.0999755859375);
        assert_eq!(round_to(Representation::Bf16, 1.0 + 2f64.powi(-9)).value, 1.0);
    }

    #[test]
    fn fp16_neighbours_of_point_one() {
        // The two FP16 values around 0.1 are k * 2^-14 * 2^-10 * ... ; enumerate
        // them from the quantum of the [2^-4, 2^-3) binade.
        let q = 2f64.powi(-4 - 10);
        let lo = (0.1 / q).floor() * q;
        let hi = lo + q;
        let nearest = if 0.1 - lo <= hi - 0.1 { lo } else { hi };
        assert_eq!(round_to(Representation::Fp16, 0.1).value, nearest);
    }

    #[test]
    fn fp_op_examples() {
        let r = fp_op(Representation::Fp32, BinOp::Add, 1.0, 2f64.powi(-25));
        assert_eq!(r.value, 1.0);
        assert_eq!(fp_op(Representation::Fp16, BinOp::Mul, 0.0, 1234.0).value, 0.0);
        let o = fp_op(Representation::Fp16, BinOp::Add, 65504.0, 65504.0);
        assert_eq!(o.value, f64::INFINITY);
        assert!(o.overflow);
    }

    #[test]
    fn fp32_half_ulp_tie_goes_to_even() {
        // 1 + 2^-24 is exactly half an FP32 ulp above 1.0.
        assert_eq!(fp_op(Representation::Fp32, BinOp::Add, 1.0, 2f64.powi(-24)).value, 1.0);
        // 1 + 3*2^-24 ties between 1+2^-23 (odd) and 1+2^-22 (even).
        let v = fp_op(Representation::Fp32, BinOp::Add, 1.0, 3.0 * 2f64.powi(-24)).value;
        assert_eq!(v, 1.0 + 2f64.powi(-22));
    }

    #[test]
    fn fp64_overflow_is_flagged() {
        let o = fp_op(Representation::Fp64, BinOp::Mul, 1e300, 1e300);
        assert!(o.overflow && o.value.is_infinite());
    }

    #[test]
    fn transcendental_examples() {
        assert_eq!(transcendental(Representation::Fp32, UnaryFn::Relu, -2.5).value, 0.0);
        assert_eq!(transcendental(Representation::Fp64, UnaryFn::Tanh, 0.0).value, 0.0);
        assert_eq!(transcendental(Representation::Fp64, UnaryFn::Sigmoid, 0.0).value, 0.5);
        assert_eq!(transcendental(Representation::Fp16, UnaryFn::Exp, 1.0).value, 2.71875);
        let o = transcendental(Representation::Fp64, UnaryFn::Exp, 1000.0);
        assert!(o.overflow);
        assert!(transcendental(Representation::Fp16, UnaryFn::Exp, 12.0).overflow);
    }
}
