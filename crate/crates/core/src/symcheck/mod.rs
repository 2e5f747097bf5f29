//! Symbolic comparison of small graphs.
//!
//! [`equivalent_sl0`] decides mathematical identity: every output element
//! is expanded into a [`SymExpr`] and normalized to a canonical polynomial
//! with activations as opaque atoms. [`equal_sl2`] decides identity of the
//! exact operation sequence, with no commutativity or reassociation.
//! LSTM nodes are not expanded.

mod expr;
mod lower;
mod poly;
mod walk;

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{ModelSpec, Shape};

pub use expr::{Func, SymExpr};
pub use lower::{lower, Instr, Opcode, Operand, ThreeAddress};
pub use poly::{Atom, Monomial, Poly};

use expr::rational;
use walk::{walk, Domain};

pub const DEFAULT_MAX_TERMS: usize = 100_000;
const WITNESS_TRIALS: usize = 64;
const WITNESS_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandOptions {
    /// Cap on scalar operations, on any expression's size and on any
    /// canonical form's term count.
    pub max_terms: usize,
    /// Name initializer elements as variables instead of using their values.
    pub symbolic_initializers: bool,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            max_terms: DEFAULT_MAX_TERMS,
            symbolic_initializers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    pub name: String,
    pub shape: Shape,
    pub elements: Vec<SymExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub outputs: Vec<SymTensor>,
}

struct Expander {
    opts: ExpandOptions,
    ops: usize,
}

type Tracked = (SymExpr, usize);

impl Expander {
    fn node(&mut self, e: SymExpr, size: usize) -> Result<Tracked> {
        self.ops += 1;
        if self.ops > self.opts.max_terms || size > self.opts.max_terms {
            return Err(Error::ExpansionTooLarge {
                limit: self.opts.max_terms,
            });
        }
        Ok((e, size))
    }
}

impl Domain for Expander {
    type V = Tracked;

    fn input(&mut self, _position: usize, name: &str, index: usize) -> Result<Tracked> {
        Ok((SymExpr::var(name, index), 1))
    }

    fn initializer(&mut self, name: &str, index: usize, value: f64) -> Result<Tracked> {
        if self.opts.symbolic_initializers {
            Ok((SymExpr::var(name, index), 1))
        } else {
            Ok((SymExpr::Const(rational(value)?), 1))
        }
    }

    fn scalar(&mut self, value: f64) -> Result<Tracked> {
        Ok((SymExpr::Const(rational(value)?), 1))
    }

    fn add(&mut self, a: &Tracked, b: &Tracked) -> Result<Tracked> {
        self.node(SymExpr::sum(vec![a.0.clone(), b.0.clone()]), a.1 + b.1 + 1)
    }

    fn mul(&mut self, a: &Tracked, b: &Tracked) -> Result<Tracked> {
        self.node(SymExpr::product(vec![a.0.clone(), b.0.clone()]), a.1 + b.1 + 1)
    }

    fn apply(&mut self, f: Func, a: &Tracked) -> Result<Tracked> {
        self.node(SymExpr::apply(f, a.0.clone()), a.1 + 1)
    }
}

/// Expands every output element into a closed expression over the graph
/// inputs (variables named after the input tensors) and initializer values.
pub fn expand(model: &ModelSpec, opts: &ExpandOptions) -> Result<Expansion> {
    let mut e = Expander { opts: *opts, ops: 0 };
    let outs = walk(model, &mut e)?;
    Ok(Expansion {
        outputs: outs
            .into_iter()
            .map(|t| SymTensor {
                name: t.name,
                shape: t.shape,
                elements: t.values.into_iter().map(|(e, _)| e).collect(),
            })
            .collect(),
    })
}

/// A rational input on which two expressions differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub output: String,
    pub index: usize,
    /// `"x[3]" -> "-7/2"`
    pub assignment: BTreeMap<String, String>,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sl0Verdict {
    pub equivalent: bool,
    /// First output element whose canonical forms differ.
    pub mismatch: Option<(String, usize)>,
    /// Absent when the forms differ only through opaque activations and
    /// no sampled point separated them.
    pub witness: Option<Witness>,
}

fn check_same_shape(a: &Expansion, b: &Expansion) -> Result<()> {
    let sa: Vec<&Shape> = a.outputs.iter().map(|t| &t.shape).collect();
    let sb: Vec<&Shape> = b.outputs.iter().map(|t| &t.shape).collect();
    if sa != sb {
        return Err(Error::shape("outputs", format!("cannot compare {sa:?} with {sb:?}")));
    }
    Ok(())
}

pub fn equivalent_sl0(a: &Expansion, b: &Expansion) -> Result<Sl0Verdict> {
    equivalent_sl0_with(a, b, DEFAULT_MAX_TERMS)
}

pub fn equivalent_sl0_with(a: &Expansion, b: &Expansion, max_terms: usize) -> Result<Sl0Verdict> {
    check_same_shape(a, b)?;
    for (ta, tb) in a.outputs.iter().zip(&b.outputs) {
        for (i, (ea, eb)) in ta.elements.iter().zip(&tb.elements).enumerate() {
            if ea == eb || Poly::from_expr(ea, max_terms)? == Poly::from_expr(eb, max_terms)? {
                continue;
            }
            return Ok(Sl0Verdict {
                equivalent: false,
                mismatch: Some((ta.name.clone(), i)),
                witness: find_witness(&ta.name, i, ea, eb)?,
            });
        }
    }
    Ok(Sl0Verdict {
        equivalent: true,
        mismatch: None,
        witness: None,
    })
}

/// Random small rationals until the two sides evaluate differently.
fn find_witness(output: &str, index: usize, a: &SymExpr, b: &SymExpr) -> Result<Option<Witness>> {
    let mut vars = BTreeSet::new();
    a.collect_vars(&mut vars);
    b.collect_vars(&mut vars);
    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    for _ in 0..WITNESS_TRIALS {
        let point: BTreeMap<(String, usize), BigRational> = vars
            .iter()
            .map(|v| {
                let num: i64 = rng.random_range(-12..=12);
                let den: i64 = rng.random_range(1..=5);
                (v.clone(), BigRational::new(num.into(), den.into()))
            })
            .collect();
        let mut env = |n: &str, i: usize| point[&(n.to_string(), i)].clone();
        let (va, vb) = (a.eval(&mut env)?, b.eval(&mut env)?);
        if va != vb {
            return Ok(Some(Witness {
                output: output.to_string(),
                index,
                assignment: point.iter().map(|((n, i), v)| (format!("{n}[{i}]"), v.to_string())).collect(),
                lhs: va.to_string(),
                rhs: vb.to_string(),
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sl2Verdict {
    pub equal: bool,
    /// Index of the first differing instruction, or the length of the
    /// shorter sequence when one is a prefix of the other.
    pub first_difference: Option<usize>,
    pub instructions: (usize, usize),
}

pub fn equal_sl2(a: &ModelSpec, b: &ModelSpec) -> Result<Sl2Verdict> {
    equal_sl2_with(a, b, DEFAULT_MAX_TERMS)
}

pub fn equal_sl2_with(a: &ModelSpec, b: &ModelSpec, max_instrs: usize) -> Result<Sl2Verdict> {
    let (la, lb) = (lower(a, max_instrs)?, lower(b, max_instrs)?);
    let first = la
        .instrs
        .iter()
        .zip(&lb.instrs)
        .position(|(x, y)| x != y)
        .or_else(|| (la.instrs.len() != lb.instrs.len()).then(|| la.instrs.len().min(lb.instrs.len())));
    let equal = first.is_none() && la.outputs == lb.outputs;
    Ok(Sl2Verdict {
        equal,
        first_difference: if equal { None } else { first.or(Some(la.instrs.len())) },
        instructions: (la.instrs.len(), lb.instrs.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Sl0,
    Sl2,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sl0" => Ok(Level::Sl0),
            "sl2" => Ok(Level::Sl2),
            _ => Err(Error::schema("level", format!("unknown level `{s}`"))),
        }
    }
}

/// Outcome of comparing two models at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymcheckReport {
    pub level: Level,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sl0: Option<Sl0Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sl2: Option<Sl2Verdict>,
}

pub fn check_models(a: &ModelSpec, b: &ModelSpec, level: Level, opts: &ExpandOptions) -> Result<SymcheckReport> {
    Ok(match level {
        Level::Sl0 => {
            let v = equivalent_sl0_with(&expand(a, opts)?, &expand(b, opts)?, opts.max_terms)?;
            SymcheckReport {
                level,
                holds: v.equivalent,
                sl0: Some(v),
                sl2: None,
            }
        }
        Level::Sl2 => {
            let v = equal_sl2_with(a, b, opts.max_terms)?;
            SymcheckReport {
                level,
                holds: v.equal,
                sl0: None,
                sl2: Some(v),
            }
        }
    })
}
