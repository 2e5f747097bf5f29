use std::collections::BTreeMap;

use super::{Direction, ModelSpec, NodeSpec, OpType};
use crate::error::{Error, Result};

pub type Shape = Vec<usize>;

/// Dimensions of every tensor in the graph: inputs, initializers and node
/// outputs. Expects a model that passes `validate_model`.
pub fn infer_shapes(m: &ModelSpec) -> Result<BTreeMap<String, Shape>> {
    let mut shapes = BTreeMap::new();
    for t in m.graph.initializers.iter().chain(&m.graph.inputs) {
        let dims = t
            .dims
            .iter()
            .map(|&d| usize::try_from(d).ok().filter(|&d| d >= 1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::shape(&t.name, format!("invalid dims {:?}", t.dims)))?;
        shapes.insert(t.name.clone(), dims);
    }
    for node in &m.graph.nodes {
        let inputs = node
            .inputs
            .iter()
            .map(|name| {
                shapes.get(name).ok_or_else(|| {
                    Error::shape(&node.name, format!("input `{name}` has no known shape"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = node_output_shape(node, &inputs)?;
        shapes.insert(node.outputs[0].clone(), out);
    }
    Ok(shapes)
}

/// Output dimensions of one node given its input dimensions.
pub fn node_output_shape(node: &NodeSpec, inputs: &[&Shape]) -> Result<Shape> {
    let op = node.op()?;
    let (lo, hi, _) = op.arity();
    if inputs.len() < lo || inputs.len() > hi {
        return Err(Error::shape(&node.name, format!("{op} got {} inputs", inputs.len())));
    }
    let fail = |detail: String| Error::shape(&node.name, detail);
    match op {
        OpType::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            match (a.as_slice(), b.as_slice()) {
                ([m, k1], [k2, n]) if k1 == k2 => Ok(vec![*m, *n]),
                _ => Err(fail(format!("cannot multiply {a:?} by {b:?}"))),
            }
        }
        OpType::Gemm => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.len() != 2 || b.len() != 2 {
                return Err(fail(format!("Gemm needs 2-D operands, got {a:?} and {b:?}")));
            }
            let (m, ka) = if node.attr_int("transA", 0)? != 0 { (a[1], a[0]) } else { (a[0], a[1]) };
            let (kb, n) = if node.attr_int("transB", 0)? != 0 { (b[1], b[0]) } else { (b[0], b[1]) };
            if ka != kb {
                return Err(fail(format!("inner dimensions differ: {a:?} x {b:?}")));
            }
            if let Some(c) = inputs.get(2) {
                if !broadcasts_to(c, &[m, n]) {
                    return Err(fail(format!("bias {c:?} does not broadcast to [{m}, {n}]")));
                }
            }
            Ok(vec![m, n])
        }
        OpType::Add => broadcast(inputs[0], inputs[1])
            .ok_or_else(|| fail(format!("cannot broadcast {:?} with {:?}", inputs[0], inputs[1]))),
        OpType::Relu | OpType::Sigmoid | OpType::Tanh => Ok(inputs[0].clone()),
        OpType::Lstm => lstm_shape(node, inputs).map_err(fail),
        OpType::Concat => {
            let rank = inputs[0].len();
            let axis = node.attr_int("axis", 0)?;
            let ax = if axis < 0 { axis + rank as i64 } else { axis };
            if ax < 0 || ax >= rank as i64 {
                return Err(fail(format!("axis {axis} out of range for rank {rank}")));
            }
            let ax = ax as usize;
            let mut out = inputs[0].clone();
            for s in &inputs[1..] {
                let compatible = s.len() == rank && (0..rank).all(|d| d == ax || s[d] == out[d]);
                if !compatible {
                    return Err(fail(format!("cannot concatenate {:?} with {s:?} on axis {ax}", inputs[0])));
                }
                out[ax] += s[ax];
            }
            Ok(out)
        }
        OpType::Reshape => {
            let target = node
                .attr_ints("shape")?
                .ok_or_else(|| fail("missing `shape` attribute".to_string()))?;
            let numel: usize = inputs[0].iter().product();
            let known: i64 = target.iter().filter(|&&d| d != -1).product();
            let holes = target.iter().filter(|&&d| d == -1).count();
            let bad = || fail(format!("cannot reshape {:?} into {target:?}", inputs[0]));
            if known <= 0 || holes > 1 || target.iter().any(|&d| d == 0 || d < -1) {
                return Err(bad());
            }
            let known = known as usize;
            if holes == 1 {
                if numel % known != 0 {
                    return Err(bad());
                }
                Ok(target
                    .iter()
                    .map(|&d| if d == -1 { numel / known } else { d as usize })
                    .collect())
            } else if known == numel {
                Ok(target.iter().map(|&d| d as usize).collect())
            } else {
                Err(bad())
            }
        }
    }
}

fn lstm_shape(node: &NodeSpec, inputs: &[&Shape]) -> std::result::Result<Shape, String> {
    let h = node.attr_int("hidden_size", 0).map_err(|e| e.to_string())?;
    if h < 1 {
        return Err("`hidden_size` must be positive".to_string());
    }
    let h = h as usize;
    let d = Direction::of(node).map_err(|e| e.to_string())?.num_directions();
    let (x, w, r) = (inputs[0], inputs[1], inputs[2]);
    let [t, p] = x.as_slice() else {
        return Err(format!("X must be (T x p), got {x:?}"));
    };
    if w.as_slice() != [d, 4 * h, *p] {
        return Err(format!("W must be [{d}, {}, {p}], got {w:?}", 4 * h));
    }
    if r.as_slice() != [d, 4 * h, h] {
        return Err(format!("R must be [{d}, {}, {h}], got {r:?}", 4 * h));
    }
    if let Some(b) = inputs.get(3) {
        if b.as_slice() != [d, 4 * h] {
            return Err(format!("B must be [{d}, {}], got {b:?}", 4 * h));
        }
    }
    Ok(vec![*t, d * h])
}

/// Two-way broadcasting with numpy rules.
pub(crate) fn broadcast(a: &[usize], b: &[usize]) -> Option<Shape> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| {
        let off = rank - s.len();
        if i < off {
            1
        } else {
            s[i - off]
        }
    };
    (0..rank)
        .map(|i| match (pad(a, i), pad(b, i)) {
            (x, y) if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        })
        .collect()
}

/// True when `from` broadcasts onto exactly `to`.
pub(crate) fn broadcasts_to(from: &[usize], to: &[usize]) -> bool {
    broadcast(from, to).is_some_and(|s| s == to)
}

/// For each element of `out` (row-major), the offset of the element of a
/// tensor of shape `from` that broadcasts onto it.
pub(crate) fn broadcast_index(out: &[usize], from: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let off = rank - from.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for d in (0..from.len()).rev() {
        strides[d + off] = if from[d] == 1 { 0 } else { s };
        s *= from[d];
    }
    let total: usize = out.iter().product();
    let mut idx = vec![0usize; rank];
    let mut result = Vec::with_capacity(total);
    for _ in 0..total {
        result.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    result
}
