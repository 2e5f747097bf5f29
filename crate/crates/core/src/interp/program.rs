use std::collections::HashMap;

use rayon::prelude::*;

use super::{ExecConfig, Grid, Observer, PredictionSet};
use crate::error::{Error, Result};
use crate::ir::{broadcast_index, infer_shapes, validate_model, Direction, ModelSpec, NodeSpec, OpType, Shape};
use crate::matrix::Matrix;
use crate::numerics::{
    accumulate, fp_op, round_to, transcendental, AccumulationMode, BinOp, QuantParams,
    Representation, UnaryFn,
};

/// A model resolved against one execution configuration: tensor slots,
/// per-tensor grids, on-grid constants and precomputed index maps.
#[derive(Debug, Clone)]
pub struct Program {
    repr: Representation,
    mode: AccumulationMode,
    names: Vec<String>,
    grids: Vec<Grid>,
    consts: Vec<Option<Vec<f64>>>,
    inputs: Vec<(usize, usize)>,
    outputs: Vec<(usize, usize)>,
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
struct Step {
    inputs: Vec<usize>,
    output: usize,
    kernel: Kernel,
}

#[derive(Debug, Clone)]
enum Kernel {
    Gemm(GemmKernel),
    Add { a_index: Vec<usize>, b_index: Vec<usize> },
    Unary(UnaryFn),
    Lstm(LstmKernel),
    Concat { outer: usize, blocks: Vec<usize> },
    Reshape,
}

#[derive(Debug, Clone)]
struct GemmKernel {
    m: usize,
    k: usize,
    n: usize,
    a_stride: (usize, usize),
    b_stride: (usize, usize),
    alpha: f64,
    beta: f64,
    c_index: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct LstmKernel {
    t: usize,
    p: usize,
    h: usize,
    direction: Direction,
    gates: Grid,
    act: Grid,
    cell: Grid,
    gates_key: String,
    cell_key: String,
}

impl Program {
    pub fn compile(model: &ModelSpec, cfg: &ExecConfig) -> Result<Program> {
        let violations = validate_model(model);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations.iter().map(ToString::to_string).collect()));
        }
        let shapes = infer_shapes(model)?;
        let repr = cfg.representation;
        let g = &model.graph;

        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut grids = Vec::new();
        let mut consts = Vec::new();

        let calibration = || {
            cfg.calibration.as_ref().ok_or_else(|| Error::UncalibratedQuant {
                repr,
                detail: "no calibration supplied".to_string(),
            })
        };
        let act_grid = |key: &str| -> Result<Grid> {
            if repr.is_float() {
                Ok(Grid::Float(repr))
            } else {
                Ok(Grid::Int(calibration()?.params(key, repr)?))
            }
        };

        for t in &g.initializers {
            let raw = t.data.as_deref().unwrap_or_default();
            let declared: Vec<f64> = raw.iter().map(|&v| round_to(t.data_type, v).value).collect();
            let (grid, data) = if repr.is_float() {
                let data = declared.iter().map(|&v| round_to(repr, v).value).collect();
                (Grid::Float(repr), data)
            } else {
                let maxabs = declared.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let q = QuantParams::calibrated(maxabs, repr.int_width().unwrap_or(16))?;
                (Grid::Int(q), declared.iter().map(|&v| q.snap(v).0).collect())
            };
            slot_of.insert(&t.name, names.len());
            names.push(t.name.clone());
            grids.push(grid);
            consts.push(Some(data));
        }
        let mut inputs = Vec::new();
        for t in &g.inputs {
            let slot = names.len();
            slot_of.insert(&t.name, slot);
            names.push(t.name.clone());
            grids.push(act_grid(&t.name)?);
            consts.push(None);
            inputs.push((slot, shapes[&t.name].iter().product()));
        }

        let mut steps = Vec::with_capacity(g.nodes.len());
        for node in &g.nodes {
            let in_slots: Vec<usize> = node.inputs.iter().map(|n| slot_of[n.as_str()]).collect();
            let in_shapes: Vec<&Shape> = node.inputs.iter().map(|n| &shapes[n]).collect();
            let out_name = &node.outputs[0];
            let out_shape = &shapes[out_name];
            let op = node.op()?;
            let grid = match op {
                OpType::Reshape => grids[in_slots[0]],
                _ => act_grid(out_name)?,
            };
            let kernel = build_kernel(node, op, &in_shapes, out_shape, repr, &act_grid)?;
            let slot = names.len();
            slot_of.insert(out_name, slot);
            names.push(out_name.clone());
            grids.push(grid);
            consts.push(None);
            steps.push(Step {
                inputs: in_slots,
                output: slot,
                kernel,
            });
        }
        let outputs = g
            .outputs
            .iter()
            .map(|n| (slot_of[n.as_str()], shapes[n].iter().product()))
            .collect();

        Ok(Program {
            repr,
            mode: cfg.accumulation,
            names,
            grids,
            consts,
            inputs,
            outputs,
            steps,
        })
    }

    pub fn input_width(&self) -> usize {
        self.inputs.iter().map(|(_, n)| n).sum()
    }

    pub fn output_width(&self) -> usize {
        self.outputs.iter().map(|(_, n)| n).sum()
    }

    /// Runs every row, in parallel when a rayon pool is available. Results
    /// are merged in input order and do not depend on the thread count.
    pub fn run(&self, batch: &Matrix) -> Result<PredictionSet> {
        self.check_batch(batch)?;
        let rows: Vec<(Vec<f64>, usize)> = (0..batch.rows())
            .into_par_iter()
            .map(|i| self.run_row(batch.row(i), None))
            .collect::<Result<_>>()?;
        self.assemble(batch, rows)
    }

    /// Sequential run reporting every produced tensor to `observer`.
    pub fn run_observed(&self, batch: &Matrix, observer: &mut dyn Observer) -> Result<PredictionSet> {
        self.check_batch(batch)?;
        let rows = (0..batch.rows())
            .map(|i| self.run_row(batch.row(i), Some(&mut *observer)))
            .collect::<Result<Vec<_>>>()?;
        self.assemble(batch, rows)
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Err(Error::Invalid("the input batch is empty".to_string()));
        }
        if batch.cols() != self.input_width() {
            return Err(Error::shape(
                "graph inputs",
                format!("batch has {} columns, the model takes {}", batch.cols(), self.input_width()),
            ));
        }
        Ok(())
    }

    fn assemble(&self, batch: &Matrix, rows: Vec<(Vec<f64>, usize)>) -> Result<PredictionSet> {
        let overflow_count = rows.iter().map(|r| r.1).sum();
        let width = self.output_width();
        let data = rows.into_iter().flat_map(|r| r.0).collect();
        Ok(PredictionSet {
            representation: self.repr,
            inputs: batch.clone(),
            outputs: Matrix::new(batch.rows(), width, data)?,
            overflow_count,
        })
    }

    fn run_row(&self, row: &[f64], mut obs: Option<&mut dyn Observer>) -> Result<(Vec<f64>, usize)> {
        let mut m = Machine {
            repr: self.repr,
            mode: self.mode,
            overflow: 0,
            buf: Vec::new(),
        };
        let mut vals: Vec<Vec<f64>> = vec![Vec::new(); self.names.len()];
        let mut offset = 0;
        for &(slot, n) in &self.inputs {
            let grid = self.grids[slot];
            vals[slot] = row[offset..offset + n].iter().map(|&v| m.snap(&grid, v)).collect();
            offset += n;
            if let Some(o) = obs.as_deref_mut() {
                o.observe(&self.names[slot], &grid, &vals[slot]);
            }
        }
        for step in &self.steps {
            let out = {
                let ins: Vec<&[f64]> = step
                    .inputs
                    .iter()
                    .map(|&s| self.consts[s].as_deref().unwrap_or(&vals[s]))
                    .collect();
                let grids: Vec<Grid> = step.inputs.iter().map(|&s| self.grids[s]).collect();
                let out_grid = self.grids[step.output];
                m.execute(step, &ins, &grids, &out_grid, obs.as_deref_mut())?
            };
            if let Some(o) = obs.as_deref_mut() {
                o.observe(&self.names[step.output], &self.grids[step.output], &out);
            }
            vals[step.output] = out;
        }
        let mut y = Vec::with_capacity(self.output_width());
        for &(slot, _) in &self.outputs {
            y.extend_from_slice(self.consts[slot].as_deref().unwrap_or(&vals[slot]));
        }
        Ok((y, m.overflow))
    }
}

fn build_kernel(
    node: &NodeSpec,
    op: OpType,
    ins: &[&Shape],
    out: &Shape,
    repr: Representation,
    act_grid: &dyn Fn(&str) -> Result<Grid>,
) -> Result<Kernel> {
    Ok(match op {
        OpType::MatMul | OpType::Gemm => {
            let (a, b) = (ins[0], ins[1]);
            let trans_a = op == OpType::Gemm && node.attr_int("transA", 0)? != 0;
            let trans_b = op == OpType::Gemm && node.attr_int("transB", 0)? != 0;
            let (m, n) = (out[0], out[1]);
            let k = if trans_a { a[0] } else { a[1] };
            let a_stride = if trans_a { (1, a[1]) } else { (a[1], 1) };
            let b_stride = if trans_b { (1, b[1]) } else { (b[1], 1) };
            let scalar = |v: f64| if repr.is_float() { round_to(repr, v).value } else { v };
            let (alpha, beta) = if op == OpType::Gemm {
                (scalar(node.attr_float("alpha", 1.0)?), scalar(node.attr_float("beta", 1.0)?))
            } else {
                (1.0, 1.0)
            };
            let c_index = ins.get(2).map(|c| broadcast_index(out, c));
            Kernel::Gemm(GemmKernel {
                m,
                k,
                n,
                a_stride,
                b_stride,
                alpha,
                beta,
                c_index,
            })
        }
        OpType::Add => Kernel::Add {
            a_index: broadcast_index(out, ins[0]),
            b_index: broadcast_index(out, ins[1]),
        },
        OpType::Relu => Kernel::Unary(UnaryFn::Relu),
        OpType::Sigmoid => Kernel::Unary(UnaryFn::Sigmoid),
        OpType::Tanh => Kernel::Unary(UnaryFn::Tanh),
        OpType::Lstm => {
            let h = node.attr_int("hidden_size", 0)? as usize;
            let gates_key = format!("{}/gates", node.name);
            let cell_key = format!("{}/cell", node.name);
            let act = match repr.int_width() {
                // Gate activations live in (-1, 1).
                Some(b) => Grid::Int(QuantParams::calibrated(1.0, b)?),
                None => Grid::Float(repr),
            };
            Kernel::Lstm(LstmKernel {
                t: ins[0][0],
                p: ins[0][1],
                h,
                direction: Direction::of(node)?,
                gates: act_grid(&gates_key)?,
                act,
                cell: act_grid(&cell_key)?,
                gates_key,
                cell_key,
            })
        }
        OpType::Concat => {
            let rank = out.len() as i64;
            let axis = node.attr_int("axis", 0)?;
            let axis = if axis < 0 { axis + rank } else { axis } as usize;
            let outer: usize = out[..axis].iter().product();
            let blocks = ins.iter().map(|s| s[axis..].iter().product()).collect();
            Kernel::Concat { outer, blocks }
        }
        OpType::Reshape => Kernel::Reshape,
    })
}


/// Per-sample arithmetic state.
struct Machine {
    repr: Representation,
    mode: AccumulationMode,
    overflow: usize,
    buf: Vec<f64>,
}

impl Machine {
    fn snap(&mut self, grid: &Grid, v: f64) -> f64 {
        match grid {
            Grid::Float(r) => {
                let x = round_to(*r, v);
                self.overflow += x.overflow as usize;
                x.value
            }
            Grid::Int(q) => {
                let (x, sat) = q.snap(v);
                self.overflow += sat as usize;
                x
            }
        }
    }

    fn mul(&mut self, a: f64, b: f64) -> f64 {
        let r = fp_op(self.repr, BinOp::Mul, a, b);
        self.overflow += r.overflow as usize;
        r.value
    }

    fn add(&mut self, a: f64, b: f64) -> f64 {
        let r = fp_op(self.repr, BinOp::Add, a, b);
        self.overflow += r.overflow as usize;
        r.value
    }

    fn apply(&mut self, f: UnaryFn, x: f64) -> f64 {
        let r = transcendental(self.repr, f, x);
        self.overflow += r.overflow as usize;
        r.value
    }

    /// Sum of `a[i] * b[i]` with each product rounded, reduced in order.
    fn dot(&mut self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        for (x, y) in a.zip(b) {
            buf.push(self.mul(x, y));
        }
        let r = accumulate(self.repr, self.mode, &buf);
        self.overflow += r.overflow as usize;
        self.buf = buf;
        r.value
    }

    fn execute<'o>(
        &mut self,
        step: &Step,
        ins: &[&[f64]],
        grids: &[Grid],
        out_grid: &Grid,
        obs: Option<&mut (dyn Observer + 'o)>,
    ) -> Result<Vec<f64>> {
        let float = self.repr.is_float();
        Ok(match &step.kernel {
            Kernel::Gemm(g) if float => self.gemm_float(g, ins),
            Kernel::Gemm(g) => self.gemm_int(g, ins, grids, out_grid),
            Kernel::Add { a_index, b_index } => {
                let (a, b) = (ins[0], ins[1]);
                a_index
                    .iter()
                    .zip(b_index)
                    .map(|(&i, &j)| {
                        if float {
                            self.add(a[i], b[j])
                        } else {
                            self.snap(out_grid, a[i] + b[j])
                        }
                    })
                    .collect()
            }
            Kernel::Unary(f) => ins[0]
                .iter()
                .map(|&x| {
                    if float {
                        self.apply(*f, x)
                    } else {
                        self.snap(out_grid, f.eval_f64(x))
                    }
                })
                .collect(),
            Kernel::Lstm(l) => self.lstm(l, ins, grids, out_grid, obs)?,
            Kernel::Concat { outer, blocks } => {
                let mut out = Vec::with_capacity(ins.iter().map(|x| x.len()).sum());
                for o in 0..*outer {
                    for (x, &bs) in ins.iter().zip(blocks) {
                        out.extend_from_slice(&x[o * bs..(o + 1) * bs]);
                    }
                }
                if !float {
                    for v in &mut out {
                        *v = self.snap(out_grid, *v);
                    }
                }
                out
            }
            Kernel::Reshape => ins[0].to_vec(),
        })
    }

    fn gemm_float(&mut self, g: &GemmKernel, ins: &[&[f64]]) -> Vec<f64> {
        let (a, b) = (ins[0], ins[1]);
        let mut out = Vec::with_capacity(g.m * g.n);
        for i in 0..g.m {
            for j in 0..g.n {
                let av = (0..g.k).map(|l| a[i * g.a_stride.0 + l * g.a_stride.1]);
                let bv = (0..g.k).map(|l| b[l * g.b_stride.0 + j * g.b_stride.1]);
                let mut s = self.dot(av, bv);
                if g.alpha != 1.0 {
                    s = self.mul(g.alpha, s);
                }
                if let Some(ci) = &g.c_index {
                    let mut c = ins[2][ci[i * g.n + j]];
                    if g.beta != 1.0 {
                        c = self.mul(g.beta, c);
                    }
                    s = self.add(s, c);
                }
                out.push(s);
            }
        }
        out
    }

    fn gemm_int(&mut self, g: &GemmKernel, ins: &[&[f64]], grids: &[Grid], out: &Grid) -> Vec<f64> {
        let (qa, qb) = (int_params(&grids[0]), int_params(&grids[1]));
        let ca: Vec<i64> = ins[0].iter().map(|&v| qa.code_of(v)).collect();
        let cb: Vec<i64> = ins[1].iter().map(|&v| qb.code_of(v)).collect();
        let unit = qa.scale * qb.scale;
        let mut y = Vec::with_capacity(g.m * g.n);
        for i in 0..g.m {
            for j in 0..g.n {
                let acc: i64 = (0..g.k)
                    .map(|l| ca[i * g.a_stride.0 + l * g.a_stride.1] * cb[l * g.b_stride.0 + j * g.b_stride.1])
                    .sum();
                let mut real = acc as f64 * unit * g.alpha;
                if let Some(ci) = &g.c_index {
                    real += g.beta * ins[2][ci[i * g.n + j]];
                }
                y.push(self.snap(out, real));
            }
        }
        y
    }

    fn lstm<'o>(
        &mut self,
        l: &LstmKernel,
        ins: &[&[f64]],
        grids: &[Grid],
        out_grid: &Grid,
        mut obs: Option<&mut (dyn Observer + 'o)>,
    ) -> Result<Vec<f64>> {
        let float = self.repr.is_float();
        let (x, w, r) = (ins[0], ins[1], ins[2]);
        let bias = ins.get(3).copied();
        let (t_len, p, h) = (l.t, l.p, l.h);
        let dirs = l.direction.num_directions();
        let mut y = vec![0.0; t_len * dirs * h];

        // Integer codes are only needed on integer grids.
        let codes = |v: &[f64], g: &Grid| -> Vec<i64> {
            match g {
                Grid::Int(q) => v.iter().map(|&e| q.code_of(e)).collect(),
                Grid::Float(_) => Vec::new(),
            }
        };
        let (cx, cw, cr) = (codes(x, &grids[0]), codes(w, &grids[1]), codes(r, &grids[2]));

        let mut z = vec![0.0; 4 * h];
        for d in 0..dirs {
            let reverse = l.direction == Direction::Reverse || d == 1;
            let mut hs = vec![0.0; h];
            let mut cs = vec![0.0; h];
            for step in 0..t_len {
                let t = if reverse { t_len - 1 - step } else { step };
                let xt = &x[t * p..(t + 1) * p];
                for (k, zk) in z.iter_mut().enumerate() {
                    let row = d * 4 * h + k;
                    let wrow = &w[row * p..(row + 1) * p];
                    let rrow = &r[row * h..(row + 1) * h];
                    if float {
                        let wx = self.dot(wrow.iter().copied(), xt.iter().copied());
                        let rh = self.dot(rrow.iter().copied(), hs.iter().copied());
                        let mut s = self.add(wx, rh);
                        if let Some(b) = bias {
                            s = self.add(s, b[row]);
                        }
                        *zk = s;
                    } else {
                        let (qx, qw, qr, qh) = (
                            int_params(&grids[0]),
                            int_params(&grids[1]),
                            int_params(&grids[2]),
                            int_params(out_grid),
                        );
                        let wx: i64 = (0..p).map(|j| cw[row * p + j] * cx[t * p + j]).sum();
                        let rh: i64 = (0..h).map(|j| cr[row * h + j] * qh.code_of(hs[j])).sum();
                        let mut s = wx as f64 * (qw.scale * qx.scale) + rh as f64 * (qr.scale * qh.scale);
                        if let Some(b) = bias {
                            s += b[row];
                        }
                        *zk = self.snap(&l.gates, s);
                    }
                }
                if let Some(o) = obs.as_deref_mut() {
                    o.observe(&l.gates_key, &l.gates, &z);
                }
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                    if float {
                        let i_a = self.apply(UnaryFn::Sigmoid, i_g);
                        let f_a = self.apply(UnaryFn::Sigmoid, f_g);
                        let g_a = self.apply(UnaryFn::Tanh, g_g);
                        let o_a = self.apply(UnaryFn::Sigmoid, o_g);
                        let fc = self.mul(f_a, cs[j]);
                        let ig = self.mul(i_a, g_a);
                        cs[j] = self.add(fc, ig);
                        let tc = self.apply(UnaryFn::Tanh, cs[j]);
                        hs[j] = self.mul(o_a, tc);
                    } else {
                        let i_a = self.snap(&l.act, UnaryFn::Sigmoid.eval_f64(i_g));
                        let f_a = self.snap(&l.act, UnaryFn::Sigmoid.eval_f64(f_g));
                        let g_a = self.snap(&l.act, UnaryFn::Tanh.eval_f64(g_g));
                        let o_a = self.snap(&l.act, UnaryFn::Sigmoid.eval_f64(o_g));
                        cs[j] = self.snap(&l.cell, f_a * cs[j] + i_a * g_a);
                        let tc = self.snap(&l.act, UnaryFn::Tanh.eval_f64(cs[j]));
                        hs[j] = self.snap(out_grid, o_a * tc);
                    }
                }
                if let Some(o) = obs.as_deref_mut() {
                    o.observe(&l.cell_key, &l.cell, &cs);
                }
                let base = t * dirs * h + d * h;
                y[base..base + h].copy_from_slice(&hs);
            }
        }
        Ok(y)
    }
}

fn int_params(g: &Grid) -> QuantParams {
    match g {
        Grid::Int(q) => *q,
        Grid::Float(_) => unreachable!("integer kernel on a float grid"),
    }
}
