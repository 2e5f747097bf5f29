//! Scalar-level traversal of a graph, shared by symbolic expansion and
//! three-address lowering. The operation order matches the interpreter:
//! for a matrix product, all element products first, then a left-to-right
//! sum, then `alpha`, then `+ beta * C`.

use std::collections::HashMap;

use super::expr::Func;
use crate::error::{Error, Result};
use crate::ir::{broadcast_index, infer_shapes, validate_model, ModelSpec, OpType, Shape};
use crate::numerics::round_to;

pub(crate) trait Domain {
    type V: Clone;

    fn input(&mut self, position: usize, name: &str, index: usize) -> Result<Self::V>;
    fn initializer(&mut self, name: &str, index: usize, value: f64) -> Result<Self::V>;
    /// A scalar attribute such as `alpha`.
    fn scalar(&mut self, value: f64) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn apply(&mut self, f: Func, a: &Self::V) -> Result<Self::V>;
}

pub(crate) struct WalkedTensor<V> {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<V>,
}

pub(crate) fn walk<D: Domain>(model: &ModelSpec, d: &mut D) -> Result<Vec<WalkedTensor<D::V>>> {
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations.iter().map(|v| v.to_string()).collect()));
    }
    if let Some(n) = model.graph.nodes.iter().find(|n| n.op().ok() == Some(OpType::Lstm)) {
        return Err(Error::UnsupportedOp(format!("{} (node `{}`)", n.op_type, n.name)));
    }
    let shapes = infer_shapes(model)?;
    let g = &model.graph;
    let mut vals: HashMap<&str, Vec<D::V>> = HashMap::new();
    for t in &g.initializers {
        let data = t.data.as_deref().unwrap_or(&[]);
        let stored = |v: f64| if t.data_type.is_float() { round_to(t.data_type, v).value } else { v };
        let v = data
            .iter()
            .enumerate()
            .map(|(i, &x)| d.initializer(&t.name, i, stored(x)))
            .collect::<Result<_>>()?;
        vals.insert(&t.name, v);
    }
    for (pos, t) in g.inputs.iter().enumerate() {
        let n = shapes[&t.name].iter().product();
        let v = (0..n).map(|i| d.input(pos, &t.name, i)).collect::<Result<_>>()?;
        vals.insert(&t.name, v);
    }
    for node in &g.nodes {
        let op = node.op()?;
        let out_name = node.outputs[0].as_str();
        let out: &Shape = &shapes[out_name];
        let ins: Vec<&Vec<D::V>> = node.inputs.iter().map(|i| &vals[i.as_str()]).collect();
        let in_shapes: Vec<&Shape> = node.inputs.iter().map(|i| &shapes[i]).collect();
        let result = match op {
            OpType::MatMul | OpType::Gemm => {
                let gemm = op == OpType::Gemm;
                let (a, b) = (in_shapes[0], in_shapes[1]);
                let trans_a = gemm && node.attr_int("transA", 0)? != 0;
                let trans_b = gemm && node.attr_int("transB", 0)? != 0;
                let (m, n) = (out[0], out[1]);
                let k = if trans_a { a[0] } else { a[1] };
                let sa = if trans_a { (1, a[1]) } else { (a[1], 1) };
                let sb = if trans_b { (1, b[1]) } else { (b[1], 1) };
                let (alpha, beta) = if gemm {
                    (node.attr_float("alpha", 1.0)?, node.attr_float("beta", 1.0)?)
                } else {
                    (1.0, 1.0)
                };
                let c_index = in_shapes.get(2).map(|c| broadcast_index(out, c));
                let mut res = Vec::with_capacity(m * n);
                for i in 0..m {
                    for j in 0..n {
                        let products = (0..k)
                            .map(|l| d.mul(&ins[0][i * sa.0 + l * sa.1], &ins[1][l * sb.0 + j * sb.1]))
                            .collect::<Result<Vec<_>>>()?;
                        let mut s = products[0].clone();
                        for p in &products[1..] {
                            s = d.add(&s, p)?;
                        }
                        if alpha != 1.0 {
                            let a = d.scalar(alpha)?;
                            s = d.mul(&a, &s)?;
                        }
                        if let Some(ci) = &c_index {
                            let mut c = ins[2][ci[i * n + j]].clone();
                            if beta != 1.0 {
                                let b = d.scalar(beta)?;
                                c = d.mul(&b, &c)?;
                            }
                            s = d.add(&s, &c)?;
                        }
                        res.push(s);
                    }
                }
                res
            }
            OpType::Add => {
                let ai = broadcast_index(out, in_shapes[0]);
                let bi = broadcast_index(out, in_shapes[1]);
                ai.iter()
                    .zip(&bi)
                    .map(|(&x, &y)| d.add(&ins[0][x], &ins[1][y]))
                    .collect::<Result<_>>()?
            }
            OpType::Relu | OpType::Tanh | OpType::Sigmoid => {
                let f = match op {
                    OpType::Relu => Func::Relu,
                    OpType::Tanh => Func::Tanh,
                    _ => Func::Sigmoid,
                };
                ins[0].iter().map(|v| d.apply(f, v)).collect::<Result<_>>()?
            }
            OpType::Concat => {
                let rank = out.len() as i64;
                let axis = node.attr_int("axis", 0)?;
                let axis = if axis < 0 { axis + rank } else { axis } as usize;
                let outer: usize = out[..axis].iter().product();
                let blocks: Vec<usize> = in_shapes.iter().map(|s| s[axis..].iter().product()).collect();
                let mut res = Vec::with_capacity(out.iter().product());
                for o in 0..outer {
                    for (t, &blk) in ins.iter().zip(&blocks) {
                        res.extend_from_slice(&t[o * blk..(o + 1) * blk]);
                    }
                }
                res
            }
            OpType::Reshape => ins[0].clone(),
            OpType::Lstm => unreachable!("rejected above"),
        };
        vals.insert(out_name, result);
    }
    Ok(g
        .outputs
        .iter()
        .map(|o| WalkedTensor {
            name: o.clone(),
            shape: shapes[o].clone(),
            values: vals[o.as_str()].clone(),
        })
        .collect())
}
