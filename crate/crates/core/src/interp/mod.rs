//! Strict-ordering interpreter for validated models.
//!
//! Every intermediate scalar is rounded into the execution representation
//! before reuse, inner products reduce over ascending index with the
//! configured [`AccumulationMode`], and no extended precision is kept
//! between operations. Integer representations run on symmetric per-tensor
//! grids calibrated from a reference run (see [`Calibration`]).

mod program;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::ModelSpec;
use crate::matrix::Matrix;
use crate::numerics::{round_to, AccumulationMode, QuantParams, Representation};

pub use program::Program;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    pub representation: Representation,
    pub accumulation: AccumulationMode,
    /// Required for integer representations.
    pub calibration: Option<Calibration>,
}

impl ExecConfig {
    pub fn new(representation: Representation) -> Self {
        ExecConfig {
            representation,
            accumulation: AccumulationMode::default(),
            calibration: None,
        }
    }

    pub fn with_accumulation(mut self, mode: AccumulationMode) -> Self {
        self.accumulation = mode;
        self
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = Some(calibration);
        self
    }
}

/// Per-tensor maximum absolute values observed on a calibration dataset.
///
/// Keys are tensor names, plus `"{node}/gates"` and `"{node}/cell"` for the
/// pre-activations and cell states inside LSTM nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub maxabs: BTreeMap<String, f64>,
}

impl Calibration {
    /// Observes an FP64 run of `model` over `batch`.
    pub fn from_run(model: &ModelSpec, batch: &Matrix) -> Result<Calibration> {
        let program = Program::compile(model, &ExecConfig::new(Representation::Fp64))?;
        let mut cal = Calibration::default();
        program.run_observed(batch, &mut cal)?;
        Ok(cal)
    }

    pub fn params(&self, key: &str, repr: Representation) -> Result<QuantParams> {
        let width = repr.int_width().ok_or_else(|| {
            Error::Invalid(format!("{repr} is not an integer representation"))
        })?;
        let maxabs = self.maxabs.get(key).ok_or_else(|| Error::UncalibratedQuant {
            repr,
            detail: format!("no statistics for `{key}`"),
        })?;
        QuantParams::calibrated(*maxabs, width)
    }

    pub fn record(&mut self, key: &str, values: &[f64]) {
        let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let slot = self.maxabs.entry(key.to_string()).or_insert(0.0);
        *slot = slot.max(m);
    }
}

/// Grid a tensor's values live on during execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    Float(Representation),
    Int(QuantParams),
}

impl Grid {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            Grid::Float(r) => !v.is_finite() || round_to(*r, v).value == v,
            Grid::Int(q) => {
                let c = q.code_of(v);
                (q.qmin()..=q.qmax()).contains(&c) && q.dequantize(c) == v
            }
        }
    }
}

/// Hook receiving every tensor (and LSTM internal state) produced during a
/// sample's execution, in evaluation order.
pub trait Observer {
    fn observe(&mut self, key: &str, grid: &Grid, values: &[f64]);
}

impl Observer for Calibration {
    fn observe(&mut self, key: &str, _grid: &Grid, values: &[f64]) {
        self.record(key, values);
    }
}

/// Observer counting values that are not fixed points of their grid.
#[derive(Debug, Default)]
pub struct GridCheck {
    pub checked: usize,
    pub off_grid: Vec<(String, f64)>,
}

impl Observer for GridCheck {
    fn observe(&mut self, key: &str, grid: &Grid, values: &[f64]) {
        self.checked += values.len();
        for &v in values {
            if !grid.contains(v) {
                self.off_grid.push((key.to_string(), v));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub representation: Representation,
    pub inputs: Matrix,
    pub outputs: Matrix,
    /// Floating-point overflows plus integer saturations.
    pub overflow_count: usize,
}

/// Executes `model` on every row of `batch`.
pub fn run(model: &ModelSpec, cfg: &ExecConfig, batch: &Matrix) -> Result<PredictionSet> {
    Program::compile(model, cfg)?.run(batch)
}

/// Per-sample differences `b - a` and their largest magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct RunComparison {
    pub eps: Matrix,
    pub max_abs: f64,
}

pub fn compare_runs(a: &PredictionSet, b: &PredictionSet) -> Result<RunComparison> {
    compare_outputs(&a.outputs, &b.outputs)
}

pub fn compare_outputs(a: &Matrix, b: &Matrix) -> Result<RunComparison> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "predictions",
            format!("cannot compare {:?} with {:?}", a.shape(), b.shape()),
        ));
    }
    let data: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| y - x).collect();
    let max_abs = data.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(RunComparison {
        eps: Matrix::new(a.rows(), a.cols(), data)?,
        max_abs,
    })
}
