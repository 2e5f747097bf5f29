//! Synthetic stand-ins for the two use-case architectures: a Dense/ReLU
//! stack and a bidirectional LSTM stack followed by a Dense layer.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{run, ExecConfig};
use crate::ir::{AttrValue, GraphSpec, ModelSpec, NodeSpec, OpType, TensorSpec};
use crate::matrix::Matrix;
use crate::metrics::{metric_value, BoundDirection, MetricBound, MetricKind};
use crate::numerics::Representation;

pub const FEATURES: usize = 20;
pub const WINDOW: usize = 16;
pub const LSTM_HIDDEN: usize = 8;
const DENSE_WIDTHS: [usize; 4] = [FEATURES, 32, 32, 1];
const INPUT_RANGE: f64 = 3.0;
/// Ground-truth noise standard deviation, relative to the spread of the
/// reference predictions.
const NOISE_RATIO: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "linear-like")]
    LinearLike,
    #[serde(rename = "lstm-like")]
    LstmLike,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::LinearLike => "linear-like",
            Arch::LstmLike => "lstm-like",
        }
    }

    /// Number of input scalars per sample.
    pub fn input_width(self) -> usize {
        match self {
            Arch::LinearLike => FEATURES,
            Arch::LstmLike => WINDOW * FEATURES,
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear-like" | "linear" => Ok(Arch::LinearLike),
            "lstm-like" | "lstm" => Ok(Arch::LstmLike),
            _ => Err(Error::schema("arch", format!("unknown architecture `{s}`"))),
        }
    }
}

/// How input samples are drawn from the box `[-3, 3]^d`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    Uniform,
    /// One stratum per sample on every axis, with independent shuffles.
    LatinHypercube,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Sampling::Uniform),
            "lhs" | "latin-hypercube" => Ok(Sampling::LatinHypercube),
            _ => Err(Error::schema("sampling", format!("unknown sampling `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UseCase {
    pub arch: Arch,
    pub seed: u64,
    pub model: ModelSpec,
    pub inputs: Matrix,
    /// FP64 strict-ordering predictions, the reference model's stand-in.
    pub reference: Matrix,
    pub ground_truth: Matrix,
}

pub fn generate_usecase(arch: Arch, seed: u64, n: usize) -> Result<UseCase> {
    generate_usecase_with(arch, seed, n, Sampling::Uniform)
}

/// Draws the weights, then the inputs, then the ground-truth noise from one
/// ChaCha8 stream seeded with `seed`.
pub fn generate_usecase_with(arch: Arch, seed: u64, n: usize, sampling: Sampling) -> Result<UseCase> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match arch {
        Arch::LinearLike => linear_like_model(&mut rng),
        Arch::LstmLike => lstm_like_model(&mut rng),
    };
    let d = arch.input_width();
    let inputs = match sampling {
        Sampling::Uniform => {
            let data = (0..n * d).map(|_| rng.random_range(-INPUT_RANGE..=INPUT_RANGE)).collect();
            Matrix::new(n, d, data)?
        }
        Sampling::LatinHypercube => latin_hypercube(&mut rng, n, d, -INPUT_RANGE, INPUT_RANGE),
    };
    let reference = run(&model, &ExecConfig::new(Representation::Fp64), &inputs)?.outputs;
    let y = reference.as_slice();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt();
    let sigma = NOISE_RATIO * if std > 0.0 { std } else { 1.0 };
    let gt = y.iter().map(|v| v + sigma * standard_normal(&mut rng)).collect();
    let ground_truth = Matrix::new(reference.rows(), reference.cols(), gt)?;
    Ok(UseCase {
        arch,
        seed,
        model,
        inputs,
        reference,
        ground_truth,
    })
}

/// Box–Muller on two uniforms; the first is taken from `(0, 1]`.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
}

/// `n` points in `[lo, hi]^dims`, each axis cut into `n` equal strata with
/// exactly one point per stratum, jittered uniformly inside it.
pub fn latin_hypercube<R: Rng>(rng: &mut R, n: usize, dims: usize, lo: f64, hi: f64) -> Matrix {
    let mut m = Matrix::filled(n, dims, 0.0);
    let mut perm: Vec<usize> = (0..n).collect();
    let width = (hi - lo) / n as f64;
    for j in 0..dims {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            m.row_mut(i)[j] = lo + width * (stratum as f64 + u);
        }
    }
    m
}

fn uniform_weights<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn dims(d: &[usize]) -> Vec<i64> {
    d.iter().map(|&x| x as i64).collect()
}

/// `x[1,20] -> Gemm -> Relu -> Gemm -> Relu -> Gemm -> y[1,1]`.
pub fn linear_like_model<R: Rng>(rng: &mut R) -> ModelSpec {
    let mut initializers = Vec::new();
    let mut nodes = Vec::new();
    let mut prev = "x".to_string();
    let layers = DENSE_WIDTHS.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (DENSE_WIDTHS[l], DENSE_WIDTHS[l + 1]);
        let (w, b) = (format!("dense{l}_W"), format!("dense{l}_B"));
        initializers.push(TensorSpec::constant(&w, dims(&[fan_in, fan_out]), uniform_weights(rng, fan_in * fan_out)));
        initializers.push(TensorSpec::constant(&b, dims(&[fan_out]), uniform_weights(rng, fan_out)));
        let out = if l + 1 == layers { "y".to_string() } else { format!("dense{l}") };
        nodes.push(NodeSpec::new(format!("dense{l}"), OpType::Gemm, &[&prev, &w, &b], &[&out]));
        prev = out;
        if l + 1 < layers {
            let act = format!("relu{l}");
            nodes.push(NodeSpec::new(&act, OpType::Relu, &[&prev], &[&act]));
            prev = act;
        }
    }
    ModelSpec::new(GraphSpec {
        name: Arch::LinearLike.name().to_string(),
        inputs: vec![TensorSpec::input("x", dims(&[1, FEATURES]))],
        outputs: vec!["y".to_string()],
        initializers,
        nodes,
    })
}

/// `x[16,20] -> 3 x bidirectional LSTM(H=8) -> Reshape[1,256] -> Gemm -> y[1,1]`.
pub fn lstm_like_model<R: Rng>(rng: &mut R) -> ModelSpec {
    let h = LSTM_HIDDEN;
    let mut initializers = Vec::new();
    let mut nodes = Vec::new();
    let mut prev = "x".to_string();
    let mut width = FEATURES;
    for l in 0..3 {
        let name = format!("bilstm{l}");
        let (w, r, b) = (format!("{name}_W"), format!("{name}_R"), format!("{name}_B"));
        initializers.push(TensorSpec::constant(&w, dims(&[2, 4 * h, width]), uniform_weights(rng, 2 * 4 * h * width)));
        initializers.push(TensorSpec::constant(&r, dims(&[2, 4 * h, h]), uniform_weights(rng, 2 * 4 * h * h)));
        initializers.push(TensorSpec::constant(&b, dims(&[2, 4 * h]), uniform_weights(rng, 2 * 4 * h)));
        nodes.push(
            NodeSpec::new(&name, OpType::Lstm, &[&prev, &w, &r, &b], &[&name])
                .with_attr("hidden_size", AttrValue::Int(h as i64))
                .with_attr("direction", AttrValue::Str("bidirectional".to_string())),
        );
        prev = name;
        width = 2 * h;
    }
    let flat = WINDOW * width;
    nodes.push(
        NodeSpec::new("flatten", OpType::Reshape, &[&prev], &["flatten"])
            .with_attr("shape", AttrValue::Ints(vec![1, flat as i64])),
    );
    initializers.push(TensorSpec::constant("dense_W", dims(&[flat, 1]), uniform_weights(rng, flat)));
    initializers.push(TensorSpec::constant("dense_B", dims(&[1]), uniform_weights(rng, 1)));
    nodes.push(NodeSpec::new("dense", OpType::Gemm, &["flatten", "dense_W", "dense_B"], &["y"]));
    ModelSpec::new(GraphSpec {
        name: Arch::LstmLike.name().to_string(),
        inputs: vec![TensorSpec::input("x", dims(&[WINDOW, FEATURES]))],
        outputs: vec!["y".to_string()],
        initializers,
        nodes,
    })
}

/// Bounds that the reference predictions meet with relative slack `slack`:
/// `R = (1 + slack) M1` for error metrics and `1 - R = (1 + slack)(1 - M1)`
/// for R² and EVS. Metrics undefined on this data are skipped.
pub fn suggest_bounds(gt: &[f64], pred1: &[f64], slack: f64) -> Result<Vec<MetricBound<f64>>> {
    if !(slack >= 0.0) {
        return Err(Error::Invalid(format!("slack must be non-negative, got {slack}")));
    }
    let mut bounds = Vec::new();
    for m in MetricKind::REGRESSION {
        let m1 = match metric_value(m, gt, pred1) {
            Ok(v) => v,
            Err(Error::DivisionDomain { .. } | Error::DegenerateVariance) => continue,
            Err(e) => return Err(e),
        };
        let r = match m.direction() {
            BoundDirection::Le => m1.abs() * (1.0 + slack),
            BoundDirection::Ge => 1.0 - (1.0 - m1) * (1.0 + slack),
        };
        bounds.push(MetricBound::new(m, r));
    }
    Ok(bounds)
}
