// SPDX-License-Identifier: Apache-2.0

//! Quantifier-free bit-vector formulas: the IR, SMT-LIB2 emission, a
//! concrete evaluator, a built-in fragment solver and an external solver
//! driver. Every SAT verdict leaving this module carries a witness that
//! [`eval_concrete`] accepted.

mod builtin;
mod emit;
mod eval;
mod external;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{solve_builtin, solve_fragment, BUILTIN_SOLVER_ID};
pub use emit::emit_smtlib;
pub use eval::{eval_concrete, eval_term};
pub use external::{solve_external, DEFAULT_TIMEOUT_MS};

/// Largest bit-vector width the evaluator can represent exactly.
pub const MAX_WIDTH: u32 = 128;

/// Variable assignment, values read as unsigned integers of the declared width.
pub type Witness = BTreeMap<String, u64>;

pub(crate) fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const { value: u128, width: u32 },
    Var { name: String, width: u32 },
    ZeroExtend { term: Box<Term>, extra: u32 },
    SignExtend { term: Box<Term>, extra: u32 },
    Mul(Box<Term>, Box<Term>),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    /// Keep the low `width` bits.
    Truncate { term: Box<Term>, width: u32 },
}

impl Term {
    pub fn constant(value: u128, width: u32) -> Term {
        Term::Const {
            value: value & mask(width),
            width,
        }
    }

    pub fn var(name: impl Into<String>, width: u32) -> Term {
        Term::Var {
            name: name.into(),
            width,
        }
    }

    pub fn zext(self, extra: u32) -> Term {
        if extra == 0 {
            self
        } else {
            Term::ZeroExtend {
                term: Box::new(self),
                extra,
            }
        }
    }

    pub fn sext(self, extra: u32) -> Term {
        if extra == 0 {
            self
        } else {
            Term::SignExtend {
                term: Box::new(self),
                extra,
            }
        }
    }

    pub fn truncate(self, width: u32) -> Term {
        Term::Truncate {
            term: Box::new(self),
            width,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Term) -> Term {
        Term::Mul(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Term) -> Term {
        Term::Add(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Term) -> Term {
        Term::Sub(Box::new(self), Box::new(rhs))
    }

    /// Width of the term, assuming it is well formed.
    pub fn width(&self) -> u32 {
        match self {
            Term::Const { width, .. } | Term::Var { width, .. } => *width,
            Term::ZeroExtend { term, extra } | Term::SignExtend { term, extra } => {
                term.width() + extra
            }
            Term::Mul(l, _) | Term::Add(l, _) | Term::Sub(l, _) => l.width(),
            Term::Truncate { width, .. } => *width,
        }
    }

    fn check(&self, vars: &mut BTreeMap<String, u32>) -> Result<u32> {
        let w = match self {
            Term::Const { value, width } => {
                if *value > mask(*width) {
                    return Err(Error::domain(format!(
                        "constant {value} does not fit in {width} bits"
                    )));
                }
                *width
            }
            Term::Var { name, width } => {
                if let Some(prev) = vars.insert(name.clone(), *width) {
                    if prev != *width {
                        return Err(Error::domain(format!(
                            "variable {name} used at widths {prev} and {width}"
                        )));
                    }
                }
                *width
            }
            Term::ZeroExtend { term, extra } | Term::SignExtend { term, extra } => {
                term.check(vars)? + extra
            }
            Term::Mul(l, r) | Term::Add(l, r) | Term::Sub(l, r) => {
                let (lw, rw) = (l.check(vars)?, r.check(vars)?);
                if lw != rw {
                    return Err(Error::domain(format!(
                        "operand widths differ: {lw} vs {rw}"
                    )));
                }
                lw
            }
            Term::Truncate { term, width } => {
                let inner = term.check(vars)?;
                if *width == 0 || *width > inner {
                    return Err(Error::domain(format!(
                        "cannot truncate {inner}-bit term to {width} bits"
                    )));
                }
                *width
            }
        };
        if w == 0 || w > MAX_WIDTH {
            return Err(Error::domain(format!("unsupported bit-vector width {w}")));
        }
        Ok(w)
    }
}

/// Boolean structure over term comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pred {
    True,
    False,
    /// Unsigned less-than.
    Ult(Term, Term),
    /// Unsigned greater-or-equal.
    Uge(Term, Term),
    Eq(Term, Term),
    /// Signed (two's complement) less-than.
    Slt(Term, Term),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    pub fn and(parts: Vec<Pred>) -> Pred {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Pred::True => {}
                Pred::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Pred::True,
            1 => flat.pop().unwrap(),
            _ => Pred::And(flat),
        }
    }

    fn check(&self, vars: &mut BTreeMap<String, u32>) -> Result<()> {
        match self {
            Pred::True | Pred::False => Ok(()),
            Pred::Ult(a, b) | Pred::Uge(a, b) | Pred::Eq(a, b) | Pred::Slt(a, b) => {
                let (aw, bw) = (a.check(vars)?, b.check(vars)?);
                if aw != bw {
                    return Err(Error::domain(format!(
                        "comparison between {aw}-bit and {bw}-bit terms"
                    )));
                }
                Ok(())
            }
            Pred::And(ps) | Pred::Or(ps) => ps.iter().try_for_each(|p| p.check(vars)),
            Pred::Not(p) => p.check(vars),
        }
    }
}

/// A closed formula: declarations plus one assertion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    decls: BTreeMap<String, u32>,
    assertion: Pred,
}

impl Formula {
    /// Builds a formula, rejecting width mismatches and undeclared variables.
    pub fn new(decls: BTreeMap<String, u32>, assertion: Pred) -> Result<Formula> {
        let mut used = BTreeMap::new();
        assertion.check(&mut used)?;
        for (name, width) in &used {
            match decls.get(name) {
                None => {
                    return Err(Error::domain(format!("variable {name} is not declared")))
                }
                Some(d) if d != width => {
                    return Err(Error::domain(format!(
                        "variable {name} declared with width {d} but used at {width}"
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some((name, w)) = decls.iter().find(|(_, w)| **w == 0 || **w > 64) {
            return Err(Error::domain(format!(
                "variable {name} has unsupported width {w} (1..=64)"
            )));
        }
        Ok(Formula { decls, assertion })
    }

    /// Declares exactly the variables the assertion uses.
    pub fn closed(assertion: Pred) -> Result<Formula> {
        let mut used = BTreeMap::new();
        assertion.check(&mut used)?;
        Formula::new(used, assertion)
    }

    /// Declarations sorted by name.
    pub fn declarations(&self) -> &BTreeMap<String, u32> {
        &self.decls
    }

    pub fn assertion(&self) -> &Pred {
        &self.assertion
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Sat,
    Unsat,
    Unknown,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Sat => "sat",
            Outcome::Unsat => "unsat",
            Outcome::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverVerdict {
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub solver_id: String,
    pub elapsed_ms: u64,
}

impl SolverVerdict {
    pub(crate) fn unsat(solver_id: &str, elapsed_ms: u64) -> Self {
        SolverVerdict {
            outcome: Outcome::Unsat,
            witness: None,
            solver_id: solver_id.to_string(),
            elapsed_ms,
        }
    }

    pub(crate) fn unknown(solver_id: &str, elapsed_ms: u64) -> Self {
        SolverVerdict {
            outcome: Outcome::Unknown,
            witness: None,
            solver_id: solver_id.to_string(),
            elapsed_ms,
        }
    }

    /// SAT verdict; `None` if the witness does not check out.
    pub(crate) fn verified_sat(
        formula: &Formula,
        witness: Witness,
        solver_id: &str,
        elapsed_ms: u64,
    ) -> Option<Self> {
        match eval_concrete(formula, &witness) {
            Ok(true) => Some(SolverVerdict {
                outcome: Outcome::Sat,
                witness: Some(witness),
                solver_id: solver_id.to_string(),
                elapsed_ms,
            }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_width_mismatch() {
        let p = Pred::Ult(Term::var("n", 32), Term::constant(1, 64));
        assert!(Formula::closed(p).is_err());
        let p = Pred::Ult(
            Term::var("n", 32).mul(Term::constant(4, 16)),
            Term::constant(1, 32),
        );
        assert!(Formula::closed(p).is_err());
    }

    #[test]
    fn rejects_undeclared_variable() {
        let p = Pred::Ult(Term::var("n", 32), Term::constant(1, 32));
        assert!(Formula::new(BTreeMap::new(), p.clone()).is_err());
        let mut decls = BTreeMap::new();
        decls.insert("n".to_string(), 16);
        assert!(Formula::new(decls, p).is_err());
    }

    #[test]
    fn rejects_inconsistent_variable_widths() {
        let p = Pred::And(vec![
            Pred::Ult(Term::var("n", 32), Term::constant(1, 32)),
            Pred::Ult(Term::var("n", 8), Term::constant(1, 8)),
        ]);
        assert!(Formula::closed(p).is_err());
    }

    #[test]
    fn and_flattens() {
        let p = Pred::and(vec![
            Pred::True,
            Pred::and(vec![Pred::False, Pred::True]),
        ]);
        assert_eq!(p, Pred::False);
    }
}
