//! Canonical polynomial form: a sorted map from monomials to non-zero
//! rational coefficients. Activations are atoms whose argument is itself
//! canonical, so two expressions are equal modulo commutativity,
//! associativity and distributivity iff their forms are equal.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::expr::{Func, SymExpr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Var(String, usize),
    Apply(Func, Box<Poly>),
}

/// Atoms with positive exponents, sorted by atom.
pub type Monomial = Vec<(Atom, u32)>;

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0.clone(), a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl Poly {
    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::default();
        if !c.is_zero() {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    pub fn atom(a: Atom) -> Self {
        let mut p = Poly::default();
        p.terms.insert(vec![(a, 1)], BigRational::one());
        p
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The value if this polynomial has no variable terms.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                if !c.is_zero() {
                    e.insert(c);
                }
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(mut self, other: Poly) -> Poly {
        for (m, c) in other.terms {
            self.add_term(m, c);
        }
        self
    }

    pub fn neg(mut self) -> Poly {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }

    pub fn mul(&self, other: &Poly, limit: usize) -> Result<Poly> {
        if self.terms.len().saturating_mul(other.terms.len()) > limit {
            return Err(Error::ExpansionTooLarge { limit });
        }
        let mut out = Poly::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(mul_monomials(ma, mb), ca * cb);
            }
        }
        Ok(out)
    }

    /// Canonical form of `e`; fails once any intermediate form exceeds
    /// `limit` terms.
    pub fn from_expr(e: &SymExpr, limit: usize) -> Result<Poly> {
        let p = match e {
            SymExpr::Var { name, index } => Poly::atom(Atom::Var(name.clone(), *index)),
            SymExpr::Const(c) => Poly::constant(c.clone()),
            SymExpr::Sum(v) => {
                let mut acc = Poly::default();
                for x in v {
                    acc = acc.add(Poly::from_expr(x, limit)?);
                }
                acc
            }
            SymExpr::Product(v) => {
                let mut acc = Poly::constant(BigRational::one());
                for x in v {
                    acc = acc.mul(&Poly::from_expr(x, limit)?, limit)?;
                }
                acc
            }
            SymExpr::Neg(x) => Poly::from_expr(x, limit)?.neg(),
            SymExpr::Apply(f, x) => {
                let arg = Poly::from_expr(x, limit)?;
                match (f, arg.as_constant()) {
                    (Func::Relu, Some(c)) => Poly::constant(if c.is_negative() { BigRational::zero() } else { c }),
                    _ => Poly::atom(Atom::Apply(*f, Box::new(arg))),
                }
            }
        };
        if p.len() > limit {
            return Err(Error::ExpansionTooLarge { limit });
        }
        Ok(p)
    }
}
