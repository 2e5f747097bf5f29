//! Verification toolkit for replicated ML models.
//!
//! A reference model (the one validated in its training framework) and a
//! re-implementation of it (possibly running at reduced precision) are compared
//! through a JSON model description. The crate provides:
//!
//! * [`ir`]: the model-description graph format, its parser and validator,
//! * [`numerics`]: software emulation of FP64/FP32/FP16/BF16 and symmetric
//!   INT*b* quantization, with explicit accumulation orders,
//! * [`interp`]: a strict-ordering interpreter executing a model at a chosen
//!   representation,
//! * [`metrics`]: regression, top-N and detection metrics, their error
//!   budgets and the margins derived from acceptability bounds,
//! * [`verifier`]: the reference-model metric validation and the replication
//!   check, with CDF reports and synthetic use-case generation,
//! * [`symcheck`]: symbolic expansion of small graphs to compare them at the
//!   mathematical level and at the exact operation-ordering level.
//!
//! Metric and geometry code is generic over the scalar type (see [`Scalar`]);
//! the aliases below fix it to `f64` for everyday use. Symbolic evaluation is
//! exact over [`Rational`].

pub mod error;
pub mod interp;
pub mod io;
pub mod ir;
pub mod matrix;
pub mod metrics;
pub mod numerics;
pub mod scalar;
pub mod symcheck;
pub mod verifier;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Exact rational numbers used by the symbolic checker.
pub type Rational = num_rational::BigRational;

pub type RegressionMetrics64 = metrics::RegressionMetrics<f64>;
pub type MetricContext64 = metrics::MetricContext<f64>;
pub type MetricBound64 = metrics::MetricBound<f64>;
pub type MarginResult64 = metrics::MarginResult<f64>;
pub type BoxPair64 = metrics::BoxPair<f64>;
pub type BBox64 = metrics::BBox<f64>;
pub type Detection64 = metrics::Detection<f64>;
pub type GroundTruthBox64 = metrics::GroundTruthBox<f64>;
pub type Lut64 = metrics::Lut<f64>;
