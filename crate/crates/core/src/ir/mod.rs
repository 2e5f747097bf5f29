//! The model-description graph: a JSON dialect of a simplified ONNX model.
//!
//! A [`ModelSpec`] holds one [`GraphSpec`], whose nodes are listed in
//! topological order and connected by tensor name. Parsing only checks
//! schema conformance; [`validate_model`] reports every structural problem
//! and [`infer_shapes`] assigns dimensions to every tensor.

mod shapes;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Representation;

pub(crate) use shapes::broadcast_index;
pub use shapes::{infer_shapes, node_output_shape, Shape};
pub use validate::{validate_model, Violation, ViolationKind};

pub const DEFAULT_DOMAIN: &str = "ai.onnx";

fn default_domain() -> String {
    DEFAULT_DOMAIN.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub ir_version: i64,
    pub opset_import: Vec<OpsetImport>,
    pub graph: GraphSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpsetImport {
    pub domain: String,
    pub version: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default)]
    pub name: String,
    /// Graph inputs; declared without data.
    pub inputs: Vec<TensorSpec>,
    /// Names of the tensors returned by the graph.
    pub outputs: Vec<String>,
    #[serde(default)]
    pub initializers: Vec<TensorSpec>,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<i64>,
    pub data_type: Representation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
}

impl TensorSpec {
    pub fn input(name: impl Into<String>, dims: Vec<i64>) -> Self {
        TensorSpec {
            name: name.into(),
            dims,
            data_type: Representation::Fp64,
            data: None,
        }
    }

    pub fn constant(name: impl Into<String>, dims: Vec<i64>, data: Vec<f64>) -> Self {
        TensorSpec {
            name: name.into(),
            dims,
            data_type: Representation::Fp64,
            data: Some(data),
        }
    }

    /// Number of elements, or `None` when some dim is not positive.
    pub fn numel(&self) -> Option<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| (d >= 1).then(|| acc.checked_mul(d as usize)).flatten())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub op_type: String,
    #[serde(default = "default_domain")]
    pub domain: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Str(String),
    Ints(Vec<i64>),
    Floats(Vec<f64>),
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, op: OpType, inputs: &[&str], outputs: &[&str]) -> Self {
        NodeSpec {
            name: name.into(),
            op_type: op.as_str().to_string(),
            domain: default_domain(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: AttrValue) -> Self {
        self.attributes.insert(key.to_string(), value);
        self
    }

    pub fn op(&self) -> Result<OpType> {
        self.op_type.parse()
    }

    fn bad_attr(&self, key: &str, expected: &str) -> Error {
        Error::shape(&self.name, format!("attribute `{key}` must be {expected}"))
    }

    pub fn attr_int(&self, key: &str, default: i64) -> Result<i64> {
        match self.attributes.get(key) {
            None => Ok(default),
            Some(AttrValue::Int(v)) => Ok(*v),
            Some(_) => Err(self.bad_attr(key, "an integer")),
        }
    }

    pub fn attr_float(&self, key: &str, default: f64) -> Result<f64> {
        match self.attributes.get(key) {
            None => Ok(default),
            Some(AttrValue::Float(v)) => Ok(*v),
            Some(AttrValue::Int(v)) => Ok(*v as f64),
            Some(_) => Err(self.bad_attr(key, "a number")),
        }
    }

    pub fn attr_str<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str> {
        match self.attributes.get(key) {
            None => Ok(default),
            Some(AttrValue::Str(s)) => Ok(s),
            Some(_) => Err(self.bad_attr(key, "a string")),
        }
    }

    pub fn attr_ints(&self, key: &str) -> Result<Option<&[i64]>> {
        match self.attributes.get(key) {
            None => Ok(None),
            Some(AttrValue::Ints(v)) => Ok(Some(v)),
            Some(_) => Err(self.bad_attr(key, "a list of integers")),
        }
    }
}

/// The closed operator set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpType {
    MatMul,
    Gemm,
    Add,
    Relu,
    Sigmoid,
    Tanh,
    Lstm,
    Concat,
    Reshape,
}

impl OpType {
    pub const ALL: [OpType; 9] = [
        OpType::MatMul,
        OpType::Gemm,
        OpType::Add,
        OpType::Relu,
        OpType::Sigmoid,
        OpType::Tanh,
        OpType::Lstm,
        OpType::Concat,
        OpType::Reshape,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpType::MatMul => "MatMul",
            OpType::Gemm => "Gemm",
            OpType::Add => "Add",
            OpType::Relu => "Relu",
            OpType::Sigmoid => "Sigmoid",
            OpType::Tanh => "Tanh",
            OpType::Lstm => "LSTM",
            OpType::Concat => "Concat",
            OpType::Reshape => "Reshape",
        }
    }

    /// Accepted input counts (inclusive) and the fixed output count.
    pub fn arity(self) -> (usize, usize, usize) {
        match self {
            OpType::MatMul | OpType::Add => (2, 2, 1),
            OpType::Gemm => (2, 3, 1),
            OpType::Relu | OpType::Sigmoid | OpType::Tanh | OpType::Reshape => (1, 1, 1),
            OpType::Lstm => (3, 4, 1),
            OpType::Concat => (1, usize::MAX, 1),
        }
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpType::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::UnsupportedOp(s.to_string()))
    }
}

/// LSTM direction attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
    Bidirectional,
}

impl Direction {
    pub fn num_directions(self) -> usize {
        match self {
            Direction::Bidirectional => 2,
            _ => 1,
        }
    }

    pub fn of(node: &NodeSpec) -> Result<Direction> {
        match node.attr_str("direction", "forward")? {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            "bidirectional" => Ok(Direction::Bidirectional),
            other => Err(Error::shape(&node.name, format!("unknown LSTM direction `{other}`"))),
        }
    }
}

/// Parses an MLMD-JSON document. Only schema conformance is checked.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let mut de = serde_json::Deserializer::from_str(text);
    let model: ModelSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        json_error(e.into_inner(), Some(path))
    })?;
    de.end().map_err(|e| json_error(e, None))?;
    Ok(model)
}

pub fn serialize_model(m: &ModelSpec) -> String {
    serde_json::to_string_pretty(m).expect("model serialization cannot fail")
}

pub(crate) fn json_error(e: serde_json::Error, path: Option<String>) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema {
            field: path.unwrap_or_else(|| ".".to_string()),
            message: strip_position(&e.to_string()),
        },
        Category::Io => Error::Io(e.into()),
        Category::Syntax | Category::Eof => Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        },
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl ModelSpec {
    /// A model with the default opset import and IR version 1.
    pub fn new(graph: GraphSpec) -> Self {
        ModelSpec {
            ir_version: 1,
            opset_import: vec![OpsetImport {
                domain: DEFAULT_DOMAIN.to_string(),
                version: 13,
            }],
            graph,
        }
    }

    pub fn initializer(&self, name: &str) -> Option<&TensorSpec> {
        self.graph.initializers.iter().find(|t| t.name == name)
    }
}
