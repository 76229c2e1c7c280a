// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use super::{Formula, Pred, Term};

/// Renders the formula as an SMT-LIB2 QF_BV script ending in
/// `(check-sat)` and `(get-model)`. Declarations come out sorted by name.
pub fn emit_smtlib(formula: &Formula) -> String {
    let mut out = String::from("(set-logic QF_BV)\n");
    for (name, width) in formula.declarations() {
        let _ = writeln!(out, "(declare-const {} (_ BitVec {width}))", symbol(name));
    }
    out.push_str("(assert ");
    pred(&mut out, formula.assertion());
    out.push_str(")\n(check-sat)\n(get-model)\n");
    out
}

const RESERVED: &[&str] = &[
    "_", "!", "as", "let", "exists", "forall", "match", "par", "assert", "check-sat",
    "declare-const", "declare-fun", "define-fun", "true", "false", "set-logic", "get-model",
];

pub(crate) fn symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c))
        && !RESERVED.contains(&name);
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

fn literal(value: u128, width: u32) -> String {
    if width % 4 == 0 {
        format!("#x{:0w$x}", value, w = (width / 4) as usize)
    } else {
        format!("#b{:0w$b}", value, w = width as usize)
    }
}

fn term(out: &mut String, t: &Term) {
    match t {
        Term::Const { value, width } => out.push_str(&literal(*value, *width)),
        Term::Var { name, .. } => out.push_str(&symbol(name)),
        Term::ZeroExtend { term: inner, extra } => {
            let _ = write!(out, "((_ zero_extend {extra}) ");
            term(out, inner);
            out.push(')');
        }
        Term::SignExtend { term: inner, extra } => {
            let _ = write!(out, "((_ sign_extend {extra}) ");
            term(out, inner);
            out.push(')');
        }
        Term::Mul(l, r) => binary(out, "bvmul", l, r),
        Term::Add(l, r) => binary(out, "bvadd", l, r),
        Term::Sub(l, r) => binary(out, "bvsub", l, r),
        Term::Truncate { term: inner, width } => {
            let _ = write!(out, "((_ extract {} 0) ", width - 1);
            term(out, inner);
            out.push(')');
        }
    }
}

fn binary(out: &mut String, op: &str, l: &Term, r: &Term) {
    let _ = write!(out, "({op} ");
    term(out, l);
    out.push(' ');
    term(out, r);
    out.push(')');
}

fn compare(out: &mut String, op: &str, l: &Term, r: &Term) {
    binary(out, op, l, r)
}

fn pred(out: &mut String, p: &Pred) {
    match p {
        Pred::True => out.push_str("true"),
        Pred::False => out.push_str("false"),
        Pred::Ult(a, b) => compare(out, "bvult", a, b),
        Pred::Uge(a, b) => compare(out, "bvuge", a, b),
        Pred::Eq(a, b) => compare(out, "=", a, b),
        Pred::Slt(a, b) => compare(out, "bvslt", a, b),
        Pred::And(ps) | Pred::Or(ps) if ps.is_empty() => {
            out.push_str(if matches!(p, Pred::And(_)) { "true" } else { "false" })
        }
        Pred::And(ps) | Pred::Or(ps) => {
            out.push_str(if matches!(p, Pred::And(_)) { "(and" } else { "(or" });
            for q in ps {
                out.push(' ');
                pred(out, q);
            }
            out.push(')');
        }
        Pred::Not(q) => {
            out.push_str("(not ");
            pred(out, q);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_formula_text() {
        let e = Term::var("n", 32).zext(32).mul(Term::constant(4, 64));
        let f = Formula::closed(Pred::Uge(e, Term::constant(1 << 32, 64))).unwrap();
        let text = emit_smtlib(&f);
        assert_eq!(
            text,
            "(set-logic QF_BV)\n\
             (declare-const n (_ BitVec 32))\n\
             (assert (bvuge (bvmul ((_ zero_extend 32) n) #x0000000000000004) #x0000000100000000))\n\
             (check-sat)\n\
             (get-model)\n"
        );
    }

    #[test]
    fn trivially_true_formula() {
        let f = Formula::closed(Pred::True).unwrap();
        assert_eq!(
            emit_smtlib(&f),
            "(set-logic QF_BV)\n(assert true)\n(check-sat)\n(get-model)\n"
        );
    }

    #[test]
    fn odd_widths_use_binary_literals() {
        assert_eq!(literal(5, 3), "#b101");
        assert_eq!(literal(255, 8), "#xff");
    }

    #[test]
    fn symbol_quoting() {
        assert_eq!(symbol("n"), "n");
        assert_eq!(symbol("hdr->count"), "hdr->count");
        assert_eq!(symbol("len(s)"), "|len(s)|");
        assert_eq!(symbol("assert"), "|assert|");
        assert_eq!(symbol("2x"), "|2x|");
    }

    #[test]
    fn declarations_are_sorted() {
        let p = Pred::Ult(Term::var("zeta", 8), Term::var("alpha", 8));
        let text = emit_smtlib(&Formula::closed(p).unwrap());
        let a = text.find("alpha (_").unwrap();
        let z = text.find("zeta (_").unwrap();
        assert!(a < z);
    }
}
