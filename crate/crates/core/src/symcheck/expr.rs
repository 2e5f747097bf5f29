use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::UnaryFn;

/// Scalar expression over input variables and exact rational constants.
///
/// Build through [`SymExpr::sum`], [`SymExpr::product`], [`SymExpr::neg`]
/// and [`SymExpr::apply`]: they flatten nested sums and products and fold
/// constants, so no `Sum` directly contains a `Sum`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymExpr {
    Var { name: String, index: usize },
    Const(BigRational),
    Sum(Vec<SymExpr>),
    Product(Vec<SymExpr>),
    Neg(Box<SymExpr>),
    Apply(Func, Box<SymExpr>),
}

/// Named activation kept opaque by the canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Func {
    Relu,
    Tanh,
    Sigmoid,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Relu => "Relu",
            Func::Tanh => "Tanh",
            Func::Sigmoid => "Sigmoid",
        }
    }

    /// Exact value where one exists (`Relu`); otherwise the rational
    /// conversion of the libm result.
    pub fn eval(self, x: &BigRational) -> Result<BigRational> {
        match self {
            Func::Relu => Ok(if x.is_negative() { BigRational::zero() } else { x.clone() }),
            Func::Tanh | Func::Sigmoid => {
                let f = x.to_f64().unwrap_or(f64::NAN);
                let u = if self == Func::Tanh { UnaryFn::Tanh } else { UnaryFn::Sigmoid };
                rational(u.eval_f64(f))
            }
        }
    }
}

pub(crate) fn rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::Invalid(format!("{v} has no rational value")))
}

fn fold(items: Vec<SymExpr>, sum: bool) -> Vec<SymExpr> {
    let mut out = Vec::with_capacity(items.len());
    let mut acc: Option<(usize, BigRational)> = None;
    for it in items {
        let flat = match it {
            SymExpr::Sum(v) if sum => v,
            SymExpr::Product(v) if !sum => v,
            other => vec![other],
        };
        for e in flat {
            match e {
                SymExpr::Const(c) => {
                    acc = Some(match acc {
                        None => (out.len(), c),
                        Some((pos, a)) => (pos, if sum { a + c } else { a * c }),
                    });
                }
                e => out.push(e),
            }
        }
    }
    if let Some((pos, c)) = acc {
        let neutral = if sum { c.is_zero() } else { c.is_one() };
        if !sum && c.is_zero() {
            return vec![SymExpr::Const(c)];
        }
        if !neutral || out.is_empty() {
            out.insert(pos.min(out.len()), SymExpr::Const(c));
        }
    }
    out
}

impl SymExpr {
    pub fn var(name: impl Into<String>, index: usize) -> Self {
        SymExpr::Var {
            name: name.into(),
            index,
        }
    }

    pub fn constant(c: BigRational) -> Self {
        SymExpr::Const(c)
    }

    pub fn sum(items: Vec<SymExpr>) -> Self {
        let mut v = fold(items, true);
        match v.len() {
            0 => SymExpr::Const(BigRational::zero()),
            1 => v.pop().unwrap(),
            _ => SymExpr::Sum(v),
        }
    }

    pub fn product(items: Vec<SymExpr>) -> Self {
        let mut v = fold(items, false);
        match v.len() {
            0 => SymExpr::Const(BigRational::one()),
            1 => v.pop().unwrap(),
            _ => SymExpr::Product(v),
        }
    }

    pub fn neg(e: SymExpr) -> Self {
        match e {
            SymExpr::Const(c) => SymExpr::Const(-c),
            SymExpr::Neg(inner) => *inner,
            e => SymExpr::Neg(Box::new(e)),
        }
    }

    pub fn apply(f: Func, e: SymExpr) -> Self {
        match (f, e) {
            (Func::Relu, SymExpr::Const(c)) => SymExpr::Const(if c.is_negative() { BigRational::zero() } else { c }),
            (f, e) => SymExpr::Apply(f, Box::new(e)),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            SymExpr::Var { .. } | SymExpr::Const(_) => 1,
            SymExpr::Sum(v) | SymExpr::Product(v) => 1 + v.iter().map(SymExpr::size).sum::<usize>(),
            SymExpr::Neg(e) | SymExpr::Apply(_, e) => 1 + e.size(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<(String, usize)>) {
        match self {
            SymExpr::Var { name, index } => {
                out.insert((name.clone(), *index));
            }
            SymExpr::Const(_) => {}
            SymExpr::Sum(v) | SymExpr::Product(v) => v.iter().for_each(|e| e.collect_vars(out)),
            SymExpr::Neg(e) | SymExpr::Apply(_, e) => e.collect_vars(out),
        }
    }

    /// Exact evaluation; `env` supplies each variable's value.
    pub fn eval(&self, env: &mut dyn FnMut(&str, usize) -> BigRational) -> Result<BigRational> {
        Ok(match self {
            SymExpr::Var { name, index } => env(name, *index),
            SymExpr::Const(c) => c.clone(),
            SymExpr::Sum(v) => {
                let mut acc = BigRational::zero();
                for e in v {
                    acc += e.eval(env)?;
                }
                acc
            }
            SymExpr::Product(v) => {
                let mut acc = BigRational::one();
                for e in v {
                    acc *= e.eval(env)?;
                }
                acc
            }
            SymExpr::Neg(e) => -e.eval(env)?,
            SymExpr::Apply(f, e) => f.eval(&e.eval(env)?)?,
        })
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, v: &[SymExpr], sep: &str, paren_sums: bool| -> fmt::Result {
            for (i, e) in v.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                if paren_sums && matches!(e, SymExpr::Sum(_)) {
                    write!(f, "({e})")?;
                } else {
                    write!(f, "{e}")?;
                }
            }
            Ok(())
        };
        match self {
            SymExpr::Var { name, index } => write!(f, "{name}[{index}]"),
            SymExpr::Const(c) if c.is_integer() => write!(f, "{}", c.numer()),
            SymExpr::Const(c) => write!(f, "({c})"),
            SymExpr::Sum(v) => join(f, v, " + ", false),
            SymExpr::Product(v) => join(f, v, "*", true),
            SymExpr::Neg(e) => write!(f, "-({e})"),
            SymExpr::Apply(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: i64, d: i64) -> SymExpr {
        SymExpr::Const(BigRational::new(n.into(), d.into()))
    }

    #[test]
    fn constructors_flatten_and_fold() {
        let x = SymExpr::var("x", 0);
        let y = SymExpr::var("x", 1);
        let inner = SymExpr::sum(vec![x.clone(), c(1, 2)]);
        let s = SymExpr::sum(vec![inner, y.clone(), c(1, 2)]);
        assert_eq!(s, SymExpr::Sum(vec![x.clone(), c(1, 1), y.clone()]));
        assert_eq!(SymExpr::sum(vec![x.clone(), c(0, 1)]), x);
        assert_eq!(SymExpr::product(vec![x.clone(), c(1, 1)]), x);
        assert_eq!(SymExpr::product(vec![x.clone(), c(0, 1)]), c(0, 1));
        assert_eq!(SymExpr::neg(SymExpr::neg(x.clone())), x);
        assert_eq!(SymExpr::apply(Func::Relu, c(-3, 1)), c(0, 1));
        assert!(matches!(SymExpr::apply(Func::Tanh, c(0, 1)), SymExpr::Apply(..)));
    }

    #[test]
    fn exact_evaluation() {
        let e = SymExpr::sum(vec![
            SymExpr::product(vec![SymExpr::var("x", 0), c(1, 3)]),
            SymExpr::apply(Func::Relu, SymExpr::neg(SymExpr::var("x", 1))),
        ]);
        let v = e.eval(&mut |_, i| BigRational::from_integer(if i == 0 { 2.into() } else { (-5).into() })).unwrap();
        assert_eq!(v, BigRational::new(17.into(), 3.into()));
        assert_eq!(e.to_string(), "x[0]*(1/3) + Relu(-(x[1]))");
    }
}
