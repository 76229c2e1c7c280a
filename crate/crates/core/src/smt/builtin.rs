// SPDX-License-Identifier: Apache-2.0

//! Dependency-free solver for the formula shapes the encoder produces.
//!
//! The fragment it decides exactly is "monotone wrap": a single atom
//! `E >= C` where `E` is built from zero-extended variables, constants,
//! additions and multiplications that cannot wrap at their own width,
//! conjoined with constant upper bounds on variables. Because `E` is
//! monotone in every variable, the formula is SAT iff `E` at the upper
//! bounds reaches `C`, and the smallest common value `t` (each variable set
//! to `min(t, bound)`) is found by bisection. Outside the fragment, a few
//! structured candidates and small exhaustive searches are tried before
//! giving up with UNKNOWN.

use std::collections::BTreeMap;
use std::time::Instant;

use super::eval::eval_pred;
use super::{eval_concrete, mask, Formula, Outcome, Pred, SolverVerdict, Term, Witness};

pub const BUILTIN_SOLVER_ID: &str = "builtin";

/// Search spaces up to this many bits are enumerated outright.
const EXHAUSTIVE_MAX_BITS: u32 = 24;

/// Decides the formula with the built-in procedures. Never fails: anything
/// it cannot decide comes back as UNKNOWN.
pub fn solve_builtin(formula: &Formula) -> SolverVerdict {
    let start = Instant::now();
    let elapsed = |start: Instant| start.elapsed().as_millis() as u64;

    if formula.declarations().is_empty() {
        return match eval_concrete(formula, &Witness::new()) {
            Ok(true) => SolverVerdict::verified_sat(formula, Witness::new(), BUILTIN_SOLVER_ID, 0)
                .expect("checked above"),
            _ => SolverVerdict::unsat(BUILTIN_SOLVER_ID, 0),
        };
    }
    if let Some(mut v) = solve_fragment(formula) {
        v.elapsed_ms = elapsed(start);
        return v;
    }
    if let Some(w) = try_candidates(formula) {
        if let Some(v) = SolverVerdict::verified_sat(formula, w, BUILTIN_SOLVER_ID, elapsed(start)) {
            return v;
        }
    }
    let total_bits: u32 = formula.declarations().values().sum();
    if formula.declarations().len() <= 2 && total_bits <= EXHAUSTIVE_MAX_BITS {
        return match exhaustive(formula) {
            Some(w) => SolverVerdict::verified_sat(formula, w, BUILTIN_SOLVER_ID, elapsed(start))
                .unwrap_or_else(|| SolverVerdict::unknown(BUILTIN_SOLVER_ID, elapsed(start))),
            None => SolverVerdict::unsat(BUILTIN_SOLVER_ID, elapsed(start)),
        };
    }
    SolverVerdict::unknown(BUILTIN_SOLVER_ID, elapsed(start))
}

/// The monotone-wrap decision procedure on its own, without the candidate
/// and enumeration fallbacks. `None` means the formula is outside the
/// fragment.
pub fn solve_fragment(formula: &Formula) -> Option<SolverVerdict> {
    let mut atoms = Vec::new();
    flatten(formula.assertion(), &mut atoms);

    let mut upper: BTreeMap<&str, u128> = formula
        .declarations()
        .iter()
        .map(|(n, w)| (n.as_str(), mask(*w)))
        .collect();
    let mut wrap: Option<(&Term, u128)> = None;

    for atom in atoms {
        if is_ground(atom) {
            if eval_ground(atom) {
                continue;
            }
            return Some(SolverVerdict::unsat(BUILTIN_SOLVER_ID, 0));
        }
        match atom {
            Pred::Uge(Term::Const { value, .. }, Term::Var { name, .. }) => {
                let ub = upper.get_mut(name.as_str())?;
                *ub = (*ub).min(*value);
            }
            Pred::Ult(Term::Var { name, .. }, Term::Const { value, .. }) => {
                if *value == 0 {
                    return Some(SolverVerdict::unsat(BUILTIN_SOLVER_ID, 0));
                }
                let ub = upper.get_mut(name.as_str())?;
                *ub = (*ub).min(*value - 1);
            }
            Pred::Uge(e, Term::Const { value, .. }) if wrap.is_none() && is_monotone(e) => {
                wrap = Some((e, *value));
            }
            _ => return None,
        }
    }

    let (expr, threshold) = wrap?;
    let at = |t: u128| -> Witness {
        upper
            .iter()
            .map(|(n, ub)| (n.to_string(), t.min(*ub) as u64))
            .collect()
    };

    let top = upper.values().copied().max().unwrap_or(0);
    let max_value = exact(expr, &at(top))?;
    if max_value < threshold {
        return Some(SolverVerdict::unsat(BUILTIN_SOLVER_ID, 0));
    }

    // Smallest t with E(min(t, ub)) >= threshold; monotone in t.
    let (mut lo, mut hi) = (0u128, top);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if exact(expr, &at(mid))? >= threshold {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut witness = at(lo);
    let in_expr = vars_of(expr);
    for (name, value) in witness.iter_mut() {
        if !in_expr.contains(name.as_str()) {
            *value = 0;
        }
    }
    SolverVerdict::verified_sat(formula, witness, BUILTIN_SOLVER_ID, 0)
}

fn flatten<'a>(p: &'a Pred, out: &mut Vec<&'a Pred>) {
    match p {
        Pred::And(ps) => ps.iter().for_each(|q| flatten(q, out)),
        other => out.push(other),
    }
}

fn is_monotone(t: &Term) -> bool {
    match t {
        Term::Const { .. } | Term::Var { .. } => true,
        Term::ZeroExtend { term, .. } => is_monotone(term),
        Term::Add(l, r) | Term::Mul(l, r) => is_monotone(l) && is_monotone(r),
        Term::SignExtend { .. } | Term::Sub(..) | Term::Truncate { .. } => false,
    }
}

/// Exact (non-modular) value of a monotone term, or `None` if any node
/// would exceed its own width.
fn exact(t: &Term, env: &Witness) -> Option<u128> {
    let v = match t {
        Term::Const { value, .. } => *value,
        Term::Var { name, .. } => *env.get(name)? as u128,
        Term::ZeroExtend { term, .. } => exact(term, env)?,
        Term::Add(l, r) => exact(l, env)?.checked_add(exact(r, env)?)?,
        Term::Mul(l, r) => exact(l, env)?.checked_mul(exact(r, env)?)?,
        _ => return None,
    };
    (v <= mask(t.width())).then_some(v)
}

fn vars_of(t: &Term) -> std::collections::BTreeSet<&str> {
    fn walk<'a>(t: &'a Term, acc: &mut std::collections::BTreeSet<&'a str>) {
        match t {
            Term::Const { .. } => {}
            Term::Var { name, .. } => {
                acc.insert(name);
            }
            Term::ZeroExtend { term, .. }
            | Term::SignExtend { term, .. }
            | Term::Truncate { term, .. } => walk(term, acc),
            Term::Mul(l, r) | Term::Add(l, r) | Term::Sub(l, r) => {
                walk(l, acc);
                walk(r, acc);
            }
        }
    }
    let mut acc = Default::default();
    walk(t, &mut acc);
    acc
}

fn term_is_ground(t: &Term) -> bool {
    vars_of(t).is_empty()
}

fn is_ground(p: &Pred) -> bool {
    match p {
        Pred::True | Pred::False => true,
        Pred::Ult(a, b) | Pred::Uge(a, b) | Pred::Eq(a, b) | Pred::Slt(a, b) => {
            term_is_ground(a) && term_is_ground(b)
        }
        Pred::And(ps) | Pred::Or(ps) => ps.iter().all(is_ground),
        Pred::Not(q) => is_ground(q),
    }
}

fn eval_ground(p: &Pred) -> bool {
    eval_pred(p, &Witness::new())
}

/// Boundary values of each variable's width, all-ones first (the canonical
/// witness for sign-conversion formulas).
fn candidates_for(width: u32) -> Vec<u64> {
    let all = mask(width) as u64;
    let msb = 1u64 << (width - 1);
    let mut v = vec![all, 0, 1, msb, msb - 1, all - 1];
    v.dedup();
    v
}

fn try_candidates(formula: &Formula) -> Option<Witness> {
    let decls: Vec<(&String, u32)> = formula.declarations().iter().map(|(n, w)| (n, *w)).collect();
    let check = |w: &Witness| matches!(eval_concrete(formula, w), Ok(true));
    match decls.as_slice() {
        [(a, wa)] => candidates_for(*wa).into_iter().find_map(|x| {
            let w = Witness::from([(a.to_string(), x)]);
            check(&w).then_some(w)
        }),
        [(a, wa), (b, wb)] => {
            for x in candidates_for(*wa) {
                for y in candidates_for(*wb) {
                    let w = Witness::from([(a.to_string(), x), (b.to_string(), y)]);
                    if check(&w) {
                        return Some(w);
                    }
                }
            }
            None
        }
        _ => {
            (0..6).find_map(|i| {
                let w: Witness = decls
                    .iter()
                    .map(|(name, width)| {
                        let c = candidates_for(*width);
                        (name.to_string(), c[i.min(c.len() - 1)])
                    })
                    .collect();
                check(&w).then_some(w)
            })
        }
    }
}

/// Lexicographic enumeration, first declared variable most significant.
fn exhaustive(formula: &Formula) -> Option<Witness> {
    let decls: Vec<(&String, u32)> = formula.declarations().iter().map(|(n, w)| (n, *w)).collect();
    let total: u32 = decls.iter().map(|(_, w)| w).sum();
    let mut w = Witness::new();
    for code in 0u64..(1u64 << total) {
        let mut shift = total;
        for (name, width) in &decls {
            shift -= width;
            w.insert(name.to_string(), (code >> shift) & mask(*width) as u64);
        }
        if matches!(eval_concrete(formula, &w), Ok(true)) {
            return Some(w);
        }
    }
    None
}

impl SolverVerdict {
    pub fn is_sat(&self) -> bool {
        self.outcome == Outcome::Sat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mul_wrap(k: u128, w: u32, guard: Option<u128>) -> Formula {
        let e = Term::var("n", w).zext(w).mul(Term::constant(k, 2 * w));
        let mut parts = vec![Pred::Uge(e, Term::constant(1u128 << w, 2 * w))];
        if let Some(b) = guard {
            parts.push(Pred::Uge(Term::constant(b, w), Term::var("n", w)));
        }
        Formula::closed(Pred::and(parts)).unwrap()
    }

    fn n_of(v: &SolverVerdict) -> u64 {
        v.witness.as_ref().unwrap()["n"]
    }

    #[test]
    fn mul_by_four_at_32_bits() {
        let v = solve_builtin(&mul_wrap(4, 32, None));
        assert_eq!(v.outcome, Outcome::Sat);
        assert_eq!(n_of(&v), 1 << 30);
    }

    #[test]
    fn mul_by_three_at_8_bits_smallest_witness() {
        let v = solve_builtin(&mul_wrap(3, 8, None));
        assert_eq!(n_of(&v), 86);
    }

    #[test]
    fn guarded_mul_is_unsat() {
        assert_eq!(solve_builtin(&mul_wrap(4, 8, Some(63))).outcome, Outcome::Unsat);
        assert_eq!(
            solve_builtin(&mul_wrap(4, 32, Some((1 << 30) - 1))).outcome,
            Outcome::Unsat
        );
        let v = solve_builtin(&mul_wrap(4, 8, Some(64)));
        assert_eq!(n_of(&v), 64);
    }

    #[test]
    fn mul_by_one_or_zero_cannot_wrap() {
        for w in [8, 16, 32, 64] {
            assert_eq!(solve_builtin(&mul_wrap(1, w, None)).outcome, Outcome::Unsat);
            assert_eq!(solve_builtin(&mul_wrap(0, w, None)).outcome, Outcome::Unsat);
        }
    }

    #[test]
    fn mul_at_64_bits() {
        let v = solve_builtin(&mul_wrap(4, 64, None));
        assert_eq!(n_of(&v), 1 << 62);
        let v = solve_builtin(&mul_wrap(3, 64, None));
        assert_eq!(n_of(&v) as u128, (1u128 << 64).div_ceil(3));
    }

    #[test]
    fn add_shapes() {
        let w = 32;
        let e = Term::var("n", w).zext(w).add(Term::constant(16, 2 * w));
        let f = Formula::closed(Pred::Uge(e, Term::constant(1 << w, 2 * w))).unwrap();
        assert_eq!(n_of(&solve_builtin(&f)), (1u64 << 32) - 16);

        let e = Term::var("a", w).zext(w).add(Term::var("b", w).zext(w));
        let f = Formula::closed(Pred::Uge(e, Term::constant(1 << w, 2 * w))).unwrap();
        let v = solve_builtin(&f);
        let wit = v.witness.unwrap();
        assert_eq!(wit["a"], 1 << 31);
        assert_eq!(wit["b"], 1 << 31);
    }

    #[test]
    fn sign_conversion_witness_is_all_ones() {
        let v = Term::var("v", 32);
        let f = Formula::closed(Pred::and(vec![
            Pred::Slt(v.clone(), Term::constant(0, 32)),
            Pred::Ult(Term::constant(1 << 31, 32), v),
        ]))
        .unwrap();
        let verdict = solve_builtin(&f);
        assert_eq!(verdict.witness.unwrap()["v"], u32::MAX as u64);
    }

    #[test]
    fn out_of_fragment_is_unknown_not_a_crash() {
        let n = Term::var("n", 32);
        let f = Formula::closed(Pred::Eq(
            n.clone().mul(n.clone()),
            Term::constant(12345, 32),
        ))
        .unwrap();
        assert_eq!(solve_builtin(&f).outcome, Outcome::Unknown);
        assert!(solve_fragment(&f).is_none());
    }

    #[test]
    fn small_formulas_are_enumerated() {
        let n = Term::var("n", 8);
        let f = Formula::closed(Pred::Eq(n.clone().mul(n), Term::constant(49, 8))).unwrap();
        let v = solve_builtin(&f);
        assert_eq!(v.outcome, Outcome::Sat);
        assert_eq!(n_of(&v), 7);
        let n = Term::var("n", 8);
        let f = Formula::closed(Pred::Ult(n.clone(), n)).unwrap();
        assert_eq!(solve_builtin(&f).outcome, Outcome::Unsat);
    }

    #[test]
    fn ground_formulas() {
        assert!(solve_builtin(&Formula::closed(Pred::True).unwrap()).is_sat());
        assert_eq!(
            solve_builtin(&Formula::closed(Pred::False).unwrap()).outcome,
            Outcome::Unsat
        );
    }

    #[test]
    fn internally_wrapping_product_is_outside_fragment() {
        // a*b*c at 2w can wrap for 32-bit inputs; the monotone argument fails.
        let w = 32;
        let e = Term::var("a", w)
            .zext(w)
            .mul(Term::var("b", w).zext(w))
            .mul(Term::var("c", w).zext(w));
        let f = Formula::closed(Pred::Uge(e, Term::constant(1 << w, 2 * w))).unwrap();
        assert!(solve_fragment(&f).is_none());
        let v = solve_builtin(&f);
        assert_ne!(v.outcome, Outcome::Unsat);
    }
}
