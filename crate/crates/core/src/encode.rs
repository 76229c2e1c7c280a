// SPDX-License-Identifier: Apache-2.0

//! Exploit conditions for candidate sites as bit-vector formulas.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfront::{IntType, SizeExpr};
use crate::error::{Error, Result};
use crate::smt::{Formula, Pred, Term, MAX_WIDTH};

/// Analysis width of `size_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Width(u32);

impl Width {
    pub const W8: Width = Width(8);
    pub const W16: Width = Width(16);
    pub const W32: Width = Width(32);
    pub const W64: Width = Width(64);

    pub fn new(bits: u32) -> Result<Width> {
        match bits {
            8 | 16 | 32 | 64 => Ok(Width(bits)),
            _ => Err(Error::domain(format!("unsupported width {bits}; expected 8, 16, 32 or 64"))),
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl Default for Width {
    fn default() -> Self {
        Width::W32
    }
}

impl TryFrom<u32> for Width {
    type Error = Error;
    fn try_from(bits: u32) -> Result<Width> {
        Width::new(bits)
    }
}

impl From<Width> for u32 {
    fn from(w: Width) -> u32 {
        w.0
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Inclusive upper bounds per variable.
pub type Guards = BTreeMap<String, u64>;

fn mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Largest value `expr` can take with every variable below 2^w.
fn max_value(expr: &SizeExpr, w: u32) -> Option<u128> {
    match expr {
        SizeExpr::Var { .. } => Some(mask(w)),
        SizeExpr::Const { value } => Some(u128::from(*value) & mask(w)),
        SizeExpr::SizeOf { bytes, .. } => Some(u128::from(*bytes) & mask(w)),
        SizeExpr::Mul { lhs, rhs } => max_value(lhs, w)?.checked_mul(max_value(rhs, w)?),
        SizeExpr::Add { lhs, rhs } => max_value(lhs, w)?.checked_add(max_value(rhs, w)?),
        SizeExpr::Cast {
            target_width, inner, ..
        } => {
            if *target_width >= w {
                max_value(inner, w)
            } else {
                // Truncated and re-extended into the w-bit range.
                max_value(inner, w)?;
                Some(mask(w))
            }
        }
    }
}

fn lower(expr: &SizeExpr, w: u32, eval: u32) -> Term {
    match expr {
        SizeExpr::Var { name } => Term::var(name.clone(), w).zext(eval - w),
        SizeExpr::Const { value } => Term::constant(u128::from(*value) & mask(w), eval),
        SizeExpr::SizeOf { bytes, .. } => Term::constant(u128::from(*bytes) & mask(w), eval),
        SizeExpr::Mul { lhs, rhs } => lower(lhs, w, eval).mul(lower(rhs, w, eval)),
        SizeExpr::Add { lhs, rhs } => lower(lhs, w, eval).add(lower(rhs, w, eval)),
        SizeExpr::Cast {
            target_width,
            signed,
            inner,
        } => {
            let inner = lower(inner, w, eval);
            if *target_width >= w {
                return inner;
            }
            let narrow = inner.truncate(*target_width);
            let back = if *signed {
                narrow.sext(w - target_width)
            } else {
                narrow.zext(w - target_width)
            };
            back.zext(eval - w)
        }
    }
}

/// The wrap condition for an allocation size: the exact value of `expr`,
/// with every variable a `width`-bit unsigned integer, is at least 2^w.
/// The comparison runs at twice the width, or at a larger multiple of it
/// when the expression's maximum needs more room.
pub fn encode_overflow(expr: &SizeExpr, width: Width, guard: Option<&Guards>) -> Result<Formula> {
    let w = width.bits();
    let vars = expr.vars();
    if vars.is_empty() {
        return Err(Error::domain(format!("size expression {expr} has no variable")));
    }
    let max = max_value(expr, w)
        .ok_or_else(|| Error::domain(format!("size expression {expr} exceeds {MAX_WIDTH} bits")))?;
    let mut eval = 2 * w;
    while eval < MAX_WIDTH && max > mask(eval) {
        eval += w;
    }
    if max > mask(eval) {
        return Err(Error::domain(format!("size expression {expr} exceeds {MAX_WIDTH} bits")));
    }

    let mut conjuncts = vec![Pred::Uge(lower(expr, w, eval), Term::constant(1u128 << w, eval))];
    if let Some(guard) = guard {
        for (name, bound) in guard {
            if vars.contains(name) {
                let b = u128::from(*bound).min(mask(w));
                conjuncts.push(Pred::Uge(Term::constant(b, w), Term::var(name.clone(), w)));
            }
        }
    }
    let assertion = if conjuncts.len() == 1 {
        conjuncts.pop().expect("one conjunct")
    } else {
        Pred::and(conjuncts)
    };
    Formula::closed(assertion)
}

/// A negative `source` value whose conversion to the unsigned `target`
/// type exceeds 2^(target-1).
pub fn encode_sign_conversion(name: &str, source: IntType, target: Width) -> Result<Formula> {
    if !source.signed {
        return Err(Error::domain(format!("{name} is unsigned; no sign conversion to encode")));
    }
    if !(2..=64).contains(&source.width) {
        return Err(Error::domain(format!("unsupported source width {}", source.width)));
    }
    let (sw, tw) = (source.width, target.bits());
    let v = Term::var(name, sw);
    let converted = match sw.cmp(&tw) {
        std::cmp::Ordering::Less => v.clone().sext(tw - sw),
        std::cmp::Ordering::Greater => v.clone().truncate(tw),
        std::cmp::Ordering::Equal => v.clone(),
    };
    Formula::closed(Pred::and(vec![
        Pred::Slt(v, Term::constant(0, sw)),
        Pred::Ult(Term::constant(1u128 << (tw - 1), tw), converted),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::{eval_concrete, solve_builtin, Outcome, Witness};

    fn n_times(k: u64) -> SizeExpr {
        SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(k))
    }

    fn bind(pairs: &[(&str, u64)]) -> Witness {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn width_domain() {
        assert_eq!(Width::default().bits(), 32);
        assert!(Width::new(24).is_err());
        assert!(serde_json::from_str::<Width>("64").is_ok());
        assert!(serde_json::from_str::<Width>("12").is_err());
    }

    #[test]
    fn unguarded_wrap_is_sat_with_smallest_witness() {
        let f = encode_overflow(&n_times(4), Width::W32, None).unwrap();
        let v = solve_builtin(&f);
        assert_eq!(v.outcome, Outcome::Sat);
        assert_eq!(v.witness.as_ref().unwrap()["n"], 1 << 30);
        // Witnesses are not unique.
        assert!(eval_concrete(&f, &bind(&[("n", (1 << 30) + 1)])).unwrap());
    }

    #[test]
    fn guard_makes_it_unsat() {
        let guard = Guards::from([("n".to_string(), (1 << 30) - 1)]);
        let f = encode_overflow(&n_times(4), Width::W32, Some(&guard)).unwrap();
        assert_eq!(solve_builtin(&f).outcome, Outcome::Unsat);
        // Max product under the bound stays below 2^32.
        assert_eq!(((1u64 << 30) - 1) * 4, (1 << 32) - 4);
    }

    #[test]
    fn multiplication_by_one_or_zero_cannot_wrap() {
        for w in [Width::W8, Width::W16, Width::W32, Width::W64] {
            for k in [0, 1] {
                let f = encode_overflow(&n_times(k), w, None).unwrap();
                assert_eq!(solve_builtin(&f).outcome, Outcome::Unsat, "k={k} w={w}");
            }
        }
    }

    #[test]
    fn no_variable_is_an_error() {
        let e = SizeExpr::mul(SizeExpr::constant(3), SizeExpr::constant(4));
        assert!(encode_overflow(&e, Width::W32, None).is_err());
    }

    #[test]
    fn formulas_are_closed() {
        let e = SizeExpr::add(
            SizeExpr::mul(SizeExpr::var("a"), SizeExpr::var("b")),
            SizeExpr::var("c"),
        );
        let f = encode_overflow(&e, Width::W16, None).unwrap();
        let names: Vec<&String> = f.declarations().keys().collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert!(f.declarations().values().all(|w| *w == 16));
    }

    #[test]
    fn wide_expressions_grow_the_evaluation_width() {
        // Three 64-bit factors need 192 bits; two fit in 128.
        let two = SizeExpr::mul(SizeExpr::var("a"), SizeExpr::var("b"));
        assert!(encode_overflow(&two, Width::W64, None).is_ok());
        let three = SizeExpr::mul(two.clone(), SizeExpr::var("c"));
        assert!(encode_overflow(&three, Width::W64, None).is_err());
        // Three 32-bit factors get 96 bits.
        let three32 = SizeExpr::mul(two, SizeExpr::var("c"));
        let f = encode_overflow(&three32, Width::W32, None).unwrap();
        let big = bind(&[("a", u32::MAX as u64), ("b", u32::MAX as u64), ("c", u32::MAX as u64)]);
        assert!(eval_concrete(&f, &big).unwrap());
        assert!(!eval_concrete(&f, &bind(&[("a", 1), ("b", 2), ("c", 3)])).unwrap());
    }

    #[test]
    fn narrow_casts_truncate() {
        // (uint8_t)n * 4 at 16 bits: at most 255 * 4, never wraps.
        let e = SizeExpr::mul(SizeExpr::cast(8, false, SizeExpr::var("n")), SizeExpr::constant(4));
        let f = encode_overflow(&e, Width::W16, None).unwrap();
        assert_eq!(solve_builtin(&f).outcome, Outcome::Unsat);
        // (int8_t)n sign-extends: n = 0x80 becomes 0xff80.
        let e = SizeExpr::mul(SizeExpr::cast(8, true, SizeExpr::var("n")), SizeExpr::constant(4));
        let f = encode_overflow(&e, Width::W16, None).unwrap();
        assert!(eval_concrete(&f, &bind(&[("n", 0x80)])).unwrap());
        assert!(!eval_concrete(&f, &bind(&[("n", 0x7f)])).unwrap());
        // Casts at or above the analysis width are transparent.
        let e = SizeExpr::mul(SizeExpr::cast(64, false, SizeExpr::var("n")), SizeExpr::constant(4));
        assert_eq!(
            encode_overflow(&e, Width::W32, None).unwrap(),
            encode_overflow(&n_times(4), Width::W32, None).unwrap()
        );
    }

    #[test]
    fn sign_conversion() {
        let s32 = IntType { width: 32, signed: true };
        let f = encode_sign_conversion("len", s32, Width::W32).unwrap();
        let v = solve_builtin(&f);
        assert_eq!(v.outcome, Outcome::Sat);
        assert_eq!(v.witness.unwrap()["len"], u32::MAX as u64);

        let s8 = IntType { width: 8, signed: true };
        let f = encode_sign_conversion("c", s8, Width::W8).unwrap();
        let v = solve_builtin(&f);
        assert_eq!(v.witness.unwrap()["c"], 255);
        // Exhaustive over -128..127: exactly the negative values whose
        // unsigned image exceeds 128.
        for raw in 0u64..256 {
            let signed = raw as u8 as i8;
            let expected = signed < 0 && (raw as u8) > 128;
            assert_eq!(eval_concrete(&f, &bind(&[("c", raw)])).unwrap(), expected, "{signed}");
        }

        // Widening and narrowing conversions.
        let f = encode_sign_conversion("x", s32, Width::W64).unwrap();
        assert!(eval_concrete(&f, &bind(&[("x", u32::MAX as u64)])).unwrap());
        let s64 = IntType { width: 64, signed: true };
        let f = encode_sign_conversion("x", s64, Width::W32).unwrap();
        assert_eq!(solve_builtin(&f).outcome, Outcome::Sat);

        let u32t = IntType { width: 32, signed: false };
        assert!(encode_sign_conversion("u", u32t, Width::W32).is_err());
    }

    /// Plain-integer enumeration of the literal `(n*k) mod 2^8 < n` form
    /// against the double-width encoding. The literal form always implies
    /// a wrap; the converse holds for k <= 2 and fails from k = 3 on
    /// (100 * 4 = 400 wraps to 144, which is not below 100). Both forms
    /// agree on whether any wrapping n exists.
    #[test]
    fn literal_wrap_form_at_8_bits() {
        for k in 1u64..=7 {
            let f = encode_overflow(&n_times(k), Width::W8, None).unwrap();
            let mut any_literal = false;
            let mut any_wide = false;
            let mut disagreements = 0;
            for n in 0u64..256 {
                let literal = (n * k) % 256 < n;
                let wide = eval_concrete(&f, &bind(&[("n", n)])).unwrap();
                assert_eq!(wide, n * k >= 256);
                if literal {
                    assert!(wide, "k={k} n={n}");
                }
                disagreements += usize::from(literal != wide);
                any_literal |= literal;
                any_wide |= wide;
            }
            assert_eq!(any_literal, any_wide, "k={k}");
            assert_eq!(disagreements == 0, k <= 2, "k={k}");
        }
        let f = encode_overflow(&n_times(4), Width::W8, None).unwrap();
        assert!(eval_concrete(&f, &bind(&[("n", 100)])).unwrap());
        assert!((100 * 4) % 256 >= 100);

        // Additive shapes match the literal form exactly.
        for c in 0u64..=7 {
            let e = SizeExpr::add(SizeExpr::var("n"), SizeExpr::constant(c));
            let f = encode_overflow(&e, Width::W8, None).unwrap();
            for n in 0u64..256 {
                let literal = (n + c) % 256 < n;
                assert_eq!(eval_concrete(&f, &bind(&[("n", n)])).unwrap(), literal);
            }
        }
        let e = SizeExpr::add(SizeExpr::var("a"), SizeExpr::var("b"));
        let f = encode_overflow(&e, Width::W8, None).unwrap();
        for a in 0u64..256 {
            for b in (0u64..256).step_by(3) {
                let literal = (a + b) % 256 < a;
                assert_eq!(eval_concrete(&f, &bind(&[("a", a), ("b", b)])).unwrap(), literal);
            }
        }
    }

    /// Builtin verdicts against plain-integer enumeration on the 8-bit
    /// fragment family: Var*Const and Var+Const with k in 0..7, Var+Var,
    /// each unguarded and under every bound 0..255.
    #[test]
    fn builtin_matches_enumeration_on_fragment_family() {
        let mut guards: Vec<Option<u64>> = vec![None];
        guards.extend((0..256).map(Some));
        let verdict = |e: &SizeExpr, g: Option<u64>| {
            let guard = g.map(|b| Guards::from([("n".to_string(), b)]));
            let f = encode_overflow(e, Width::W8, guard.as_ref()).unwrap();
            let v = solve_builtin(&f);
            assert_ne!(v.outcome, Outcome::Unknown, "{e} guard {g:?}");
            v.outcome == Outcome::Sat
        };
        for k in 0u64..=7 {
            for &g in &guards {
                let hi = g.unwrap_or(255);
                let mul = (0..=hi).any(|n| n * k >= 256);
                assert_eq!(verdict(&n_times(k), g), mul, "n*{k} guard {g:?}");
                let add = (0..=hi).any(|n| n + k >= 256);
                let e = SizeExpr::add(SizeExpr::var("n"), SizeExpr::constant(k));
                assert_eq!(verdict(&e, g), add, "n+{k} guard {g:?}");
            }
        }
        for &g in &guards {
            let hi = g.unwrap_or(255);
            let vv = (0..=hi).any(|n| (0..256).any(|m| n + m >= 256));
            let e = SizeExpr::add(SizeExpr::var("n"), SizeExpr::var("m"));
            assert_eq!(verdict(&e, g), vv, "n+m guard {g:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wrap_predicate_matches_integer_arithmetic(n in any::<u32>(), k in 0u64..64, c in 0u64..1024) {
                let e = SizeExpr::add(n_times(k), SizeExpr::constant(c));
                let f = encode_overflow(&e, Width::W32, None).unwrap();
                let exact = u128::from(n) * u128::from(k) + u128::from(c);
                prop_assert_eq!(eval_concrete(&f, &bind(&[("n", n as u64)])).unwrap(), exact >= 1u128 << 32);
            }

            #[test]
            fn guarded_verdicts_respect_the_bound(k in 2u64..9, bound in any::<u32>()) {
                let guard = Guards::from([("n".to_string(), bound as u64)]);
                let f = encode_overflow(&n_times(k), Width::W32, Some(&guard)).unwrap();
                let v = solve_builtin(&f);
                let wraps = u128::from(bound) * u128::from(k) >= 1u128 << 32;
                prop_assert_eq!(v.outcome == Outcome::Sat, wraps);
                if let Some(w) = v.witness {
                    prop_assert!(w["n"] <= bound as u64);
                }
            }
        }
    }
}
