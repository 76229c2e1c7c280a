// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::{mask, Formula, Pred, Term};
use crate::error::{Error, Result};

/// Evaluates the formula's assertion under exact modular arithmetic.
pub fn eval_concrete(formula: &Formula, bindings: &BTreeMap<String, u64>) -> Result<bool> {
    for (name, width) in formula.declarations() {
        let value = bindings
            .get(name)
            .ok_or_else(|| Error::domain(format!("no binding for variable {name}")))?;
        if (*value as u128) > mask(*width) {
            return Err(Error::domain(format!(
                "binding {name} = {value} does not fit in {width} bits"
            )));
        }
    }
    Ok(eval_pred(formula.assertion(), bindings))
}

pub(crate) fn eval_pred(pred: &Pred, env: &BTreeMap<String, u64>) -> bool {
    match pred {
        Pred::True => true,
        Pred::False => false,
        Pred::Ult(a, b) => eval_term(a, env) < eval_term(b, env),
        Pred::Uge(a, b) => eval_term(a, env) >= eval_term(b, env),
        Pred::Eq(a, b) => eval_term(a, env) == eval_term(b, env),
        Pred::Slt(a, b) => {
            let w = a.width();
            as_signed(eval_term(a, env), w) < as_signed(eval_term(b, env), w)
        }
        Pred::And(ps) => ps.iter().all(|p| eval_pred(p, env)),
        Pred::Or(ps) => ps.iter().any(|p| eval_pred(p, env)),
        Pred::Not(p) => !eval_pred(p, env),
    }
}

/// Value of a term, as an unsigned integer of the term's width.
///
/// Variables absent from `env` evaluate to zero; [`eval_concrete`] checks
/// coverage before calling this.
pub fn eval_term(term: &Term, env: &BTreeMap<String, u64>) -> u128 {
    match term {
        Term::Const { value, width } => value & mask(*width),
        Term::Var { name, width } => env.get(name).copied().unwrap_or(0) as u128 & mask(*width),
        Term::ZeroExtend { term, .. } => eval_term(term, env),
        Term::SignExtend { term: inner, extra } => {
            let w = inner.width();
            let v = eval_term(inner, env);
            if w < 128 && (v >> (w - 1)) & 1 == 1 {
                (v | (mask(w + extra) & !mask(w))) & mask(w + extra)
            } else {
                v
            }
        }
        Term::Mul(l, r) => {
            eval_term(l, env).wrapping_mul(eval_term(r, env)) & mask(l.width())
        }
        Term::Add(l, r) => {
            eval_term(l, env).wrapping_add(eval_term(r, env)) & mask(l.width())
        }
        Term::Sub(l, r) => {
            eval_term(l, env).wrapping_sub(eval_term(r, env)) & mask(l.width())
        }
        Term::Truncate { term, width } => eval_term(term, env) & mask(*width),
    }
}

pub(crate) fn as_signed(value: u128, width: u32) -> i128 {
    if width >= 128 {
        return value as i128;
    }
    if (value >> (width - 1)) & 1 == 1 {
        (value as i128) - (1i128 << width)
    } else {
        value as i128
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap_formula(k: u128, w: u32) -> Formula {
        let e = Term::var("n", w).zext(w).mul(Term::constant(k, 2 * w));
        Formula::closed(Pred::Uge(e, Term::constant(1u128 << w, 2 * w))).unwrap()
    }

    fn bind(n: u64) -> BTreeMap<String, u64> {
        BTreeMap::from([("n".to_string(), n)])
    }

    #[test]
    fn wrap_formula_examples() {
        let f = wrap_formula(4, 32);
        assert!(eval_concrete(&f, &bind((1 << 30) + 1)).unwrap());
        assert!(eval_concrete(&f, &bind(1 << 30)).unwrap());
        assert!(!eval_concrete(&f, &bind(1)).unwrap());
        assert!(!eval_concrete(&f, &bind(0)).unwrap());
        assert!(!eval_concrete(&f, &bind((1 << 30) - 1)).unwrap());
    }

    #[test]
    fn missing_or_oversized_binding_is_an_error() {
        let f = wrap_formula(4, 32);
        assert!(eval_concrete(&f, &BTreeMap::new()).is_err());
        assert!(eval_concrete(&f, &bind(1 << 32)).is_err());
    }

    #[test]
    fn signed_comparison_and_extension() {
        let v = Term::var("v", 8);
        let f = Formula::closed(Pred::and(vec![
            Pred::Slt(v.clone(), Term::constant(0, 8)),
            Pred::Ult(Term::constant(1 << 31, 32), v.sext(24)),
        ]))
        .unwrap();
        assert!(eval_concrete(&f, &BTreeMap::from([("v".into(), 0xff)])).unwrap());
        assert!(!eval_concrete(&f, &BTreeMap::from([("v".into(), 0x7f)])).unwrap());
        assert_eq!(as_signed(0x80, 8), -128);
        assert_eq!(as_signed(u128::MAX, 128), -1);
    }

    #[test]
    fn arithmetic_wraps_at_term_width() {
        let env = BTreeMap::from([("x".to_string(), 200u64)]);
        let x = Term::var("x", 8);
        assert_eq!(eval_term(&x.clone().add(Term::constant(100, 8)), &env), 44);
        assert_eq!(eval_term(&x.clone().mul(Term::constant(2, 8)), &env), 144);
        assert_eq!(eval_term(&Term::constant(1, 8).sub(x.clone()), &env), 57);
        assert_eq!(eval_term(&x.zext(8).truncate(4), &env), 8);
    }
}
