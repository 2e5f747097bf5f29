use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{AttrValue, Direction, ModelSpec, NodeSpec, OpType, TensorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    IrVersion,
    EmptyOpsetImport,
    EmptyDims,
    NonPositiveDim,
    DataLength,
    MissingData,
    UnexpectedData,
    DuplicateName,
    DuplicateNodeName,
    UnsupportedOp,
    Arity,
    DanglingInput,
    TopologicalOrder,
    UnproducedOutput,
    BadAttribute,
}

/// One broken invariant. `subject` names the node or tensor responsible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}]: {}", self.kind, self.subject, self.detail)
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, kind: ViolationKind, subject: &str, detail: impl Into<String>) {
        self.0.push(Violation {
            kind,
            subject: subject.to_string(),
            detail: detail.into(),
        });
    }
}

/// Lists every structural problem of `m`; an empty list means valid.
pub fn validate_model(m: &ModelSpec) -> Vec<Violation> {
    let mut r = Report(Vec::new());
    if m.ir_version < 1 {
        r.push(ViolationKind::IrVersion, "model", format!("ir_version {} < 1", m.ir_version));
    }
    if m.opset_import.is_empty() {
        r.push(ViolationKind::EmptyOpsetImport, "model", "opset_import is empty");
    }

    let g = &m.graph;
    for t in &g.initializers {
        check_tensor(&mut r, t, true);
    }
    for t in &g.inputs {
        check_tensor(&mut r, t, false);
    }

    // Where each tensor name becomes available: None for graph-level
    // tensors, Some(i) for the output of node i.
    let mut origin: HashMap<&str, Option<usize>> = HashMap::new();
    for t in g.initializers.iter().chain(&g.inputs) {
        if origin.insert(&t.name, None).is_some() {
            r.push(ViolationKind::DuplicateName, &t.name, "tensor name declared twice");
        }
    }
    let mut node_names = HashSet::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if !node_names.insert(n.name.as_str()) {
            r.push(ViolationKind::DuplicateNodeName, &n.name, "node name used twice");
        }
        for o in &n.outputs {
            if origin.insert(o, Some(i)).is_some() {
                r.push(
                    ViolationKind::DuplicateName,
                    o,
                    format!("tensor produced by node `{}` is already defined", n.name),
                );
            }
        }
    }

    for (i, n) in g.nodes.iter().enumerate() {
        check_node_signature(&mut r, n);
        for inp in &n.inputs {
            match origin.get(inp.as_str()) {
                None => r.push(
                    ViolationKind::DanglingInput,
                    &n.name,
                    format!("input `{inp}` is not declared anywhere"),
                ),
                Some(Some(j)) if *j >= i => r.push(
                    ViolationKind::TopologicalOrder,
                    &n.name,
                    format!("input `{inp}` is produced by later node `{}`", g.nodes[*j].name),
                ),
                _ => {}
            }
        }
    }

    for o in &g.outputs {
        if !matches!(origin.get(o.as_str()), Some(Some(_))) {
            r.push(ViolationKind::UnproducedOutput, o, "graph output is not produced by any node");
        }
    }
    r.0
}

fn check_tensor(r: &mut Report, t: &TensorSpec, initializer: bool) {
    if t.dims.is_empty() {
        r.push(ViolationKind::EmptyDims, &t.name, "dims is empty");
    }
    if let Some(d) = t.dims.iter().find(|&&d| d < 1) {
        r.push(ViolationKind::NonPositiveDim, &t.name, format!("dimension {d} is not positive"));
    }
    match (&t.data, initializer) {
        (None, true) => r.push(ViolationKind::MissingData, &t.name, "initializer has no data"),
        (Some(_), false) => r.push(ViolationKind::UnexpectedData, &t.name, "graph input carries data"),
        (Some(data), true) => {
            if let Some(n) = t.numel() {
                if !t.dims.is_empty() && data.len() != n {
                    r.push(
                        ViolationKind::DataLength,
                        &t.name,
                        format!("data has {} values, dims {:?} need {n}", data.len(), t.dims),
                    );
                }
            }
        }
        (None, false) => {}
    }
}

fn check_node_signature(r: &mut Report, n: &NodeSpec) {
    let op = match n.op() {
        Ok(op) => op,
        Err(_) => {
            r.push(
                ViolationKind::UnsupportedOp,
                &n.name,
                format!("op_type `{}` is not supported", n.op_type),
            );
            return;
        }
    };
    let (lo, hi, outs) = op.arity();
    if n.inputs.len() < lo || n.inputs.len() > hi {
        let expected = if hi == usize::MAX {
            format!("at least {lo}")
        } else if lo == hi {
            lo.to_string()
        } else {
            format!("{lo} to {hi}")
        };
        r.push(
            ViolationKind::Arity,
            &n.name,
            format!("{op} takes {expected} inputs, got {}", n.inputs.len()),
        );
    }
    if n.outputs.len() != outs {
        r.push(
            ViolationKind::Arity,
            &n.name,
            format!("{op} produces {outs} output, got {}", n.outputs.len()),
        );
    }
    check_attributes(r, n, op);
}

fn check_attributes(r: &mut Report, n: &NodeSpec, op: OpType) {
    let mut bad = |detail: String| r.push(ViolationKind::BadAttribute, &n.name, detail);
    let allowed: &[&str] = match op {
        OpType::Gemm => &["alpha", "beta", "transA", "transB"],
        OpType::Lstm => &["hidden_size", "direction"],
        OpType::Concat => &["axis"],
        OpType::Reshape => &["shape"],
        _ => &[],
    };
    for key in n.attributes.keys() {
        if !allowed.contains(&key.as_str()) {
            bad(format!("unknown attribute `{key}` for {op}"));
        }
    }
    match op {
        OpType::Gemm => {
            for key in ["transA", "transB"] {
                match n.attr_int(key, 0) {
                    Ok(0 | 1) => {}
                    _ => bad(format!("`{key}` must be 0 or 1")),
                }
            }
            for key in ["alpha", "beta"] {
                if n.attr_float(key, 1.0).map_or(true, |v| !v.is_finite()) {
                    bad(format!("`{key}` must be a finite number"));
                }
            }
        }
        OpType::Lstm => {
            match n.attr_int("hidden_size", 0) {
                Ok(h) if h >= 1 => {}
                _ => bad("`hidden_size` must be a positive integer".to_string()),
            }
            if Direction::of(n).is_err() {
                bad("`direction` must be forward, reverse or bidirectional".to_string());
            }
        }
        OpType::Concat => {
            if !matches!(n.attributes.get("axis"), Some(AttrValue::Int(_))) {
                bad("`axis` is required and must be an integer".to_string());
            }
        }
        OpType::Reshape => match n.attr_ints("shape") {
            Ok(Some(s)) if !s.is_empty() => {
                if s.iter().filter(|&&d| d == -1).count() > 1 || s.iter().any(|&d| d == 0 || d < -1) {
                    bad("`shape` entries must be positive, with at most one -1".to_string());
                }
            }
            _ => bad("`shape` is required and must be a non-empty integer list".to_string()),
        },
        _ => {}
    }
}
