//! Three-address lowering for strict operation-order comparison.
//!
//! Operands name graph inputs by position, constants by exact value and
//! temporaries by emission order, so node and tensor names never matter
//! while operand order always does.

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::expr::{rational, Func};
use super::walk::{walk, Domain};
use crate::error::{Error, Result};
use crate::ir::ModelSpec;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Input { input: usize, index: usize },
    Const(String),
    Temp(usize),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Input { input, index } => write!(f, "in{input}[{index}]"),
            Operand::Const(c) => f.write_str(c),
            Operand::Temp(t) => write!(f, "t{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Add,
    Mul,
    Apply(Func),
}

/// `t{k} = op args`, where `k` is the instruction's position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instr {
    pub op: Opcode,
    pub args: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeAddress {
    pub instrs: Vec<Instr>,
    /// Operand holding each output element, outputs concatenated in order.
    pub outputs: Vec<Operand>,
}

impl fmt::Display for ThreeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, ins) in self.instrs.iter().enumerate() {
            let op = match ins.op {
                Opcode::Add => "add",
                Opcode::Mul => "mul",
                Opcode::Apply(func) => func.name(),
            };
            let args: Vec<String> = ins.args.iter().map(|a| a.to_string()).collect();
            writeln!(f, "t{k} = {op} {}", args.join(", "))?;
        }
        let outs: Vec<String> = self.outputs.iter().map(|o| o.to_string()).collect();
        writeln!(f, "return {}", outs.join(", "))
    }
}

struct Lowering {
    instrs: Vec<Instr>,
    limit: usize,
}

impl Lowering {
    fn emit(&mut self, op: Opcode, args: Vec<Operand>) -> Result<Operand> {
        if self.instrs.len() >= self.limit {
            return Err(Error::ExpansionTooLarge { limit: self.limit });
        }
        self.instrs.push(Instr { op, args });
        Ok(Operand::Temp(self.instrs.len() - 1))
    }
}

fn constant(v: f64) -> Result<Operand> {
    let r: BigRational = rational(v)?;
    Ok(Operand::Const(r.to_string()))
}

impl Domain for Lowering {
    type V = Operand;

    fn input(&mut self, position: usize, _name: &str, index: usize) -> Result<Operand> {
        Ok(Operand::Input { input: position, index })
    }

    fn initializer(&mut self, _name: &str, _index: usize, value: f64) -> Result<Operand> {
        constant(value)
    }

    fn scalar(&mut self, value: f64) -> Result<Operand> {
        constant(value)
    }

    fn add(&mut self, a: &Operand, b: &Operand) -> Result<Operand> {
        self.emit(Opcode::Add, vec![a.clone(), b.clone()])
    }

    fn mul(&mut self, a: &Operand, b: &Operand) -> Result<Operand> {
        self.emit(Opcode::Mul, vec![a.clone(), b.clone()])
    }

    fn apply(&mut self, f: Func, a: &Operand) -> Result<Operand> {
        self.emit(Opcode::Apply(f), vec![a.clone()])
    }
}

pub fn lower(model: &ModelSpec, max_instrs: usize) -> Result<ThreeAddress> {
    let mut l = Lowering {
        instrs: Vec::new(),
        limit: max_instrs,
    };
    let outs = walk(model, &mut l)?;
    Ok(ThreeAddress {
        instrs: l.instrs,
        outputs: outs.into_iter().flat_map(|t| t.values).collect(),
    })
}
