// SPDX-License-Identifier: Apache-2.0

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{emit_smtlib, mask, Formula, SolverVerdict, Witness};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;

/// Runs `<solver_command> <file.smt2>` on the emitted script and parses its
/// answer. A timeout yields UNKNOWN; a solver that cannot be spawned, or a
/// model that cannot be parsed or does not verify, is an infrastructure
/// error.
pub fn solve_external(
    formula: &Formula,
    solver_command: &str,
    timeout_ms: u64,
) -> Result<SolverVerdict> {
    let mut parts = solver_command.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::infra("empty solver command"))?;
    let solver_id = Path::new(program)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| program.to_string());

    let mut script = tempfile::Builder::new()
        .prefix("cobalt-")
        .suffix(".smt2")
        .tempfile()?;
    script.write_all(emit_smtlib(formula).as_bytes())?;
    script.flush()?;

    let start = Instant::now();
    let mut child = Command::new(program)
        .args(parts)
        .arg(script.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::infra(format!("cannot spawn solver `{solver_command}`: {e}")))?;

    let timeout = Duration::from_millis(timeout_ms);
    let status = child.wait_timeout(timeout)?;
    if status.is_none() {
        let _ = child.kill();
        let _ = child.wait();
        let elapsed = (start.elapsed().as_millis() as u64).max(timeout_ms);
        return Ok(SolverVerdict::unknown(&solver_id, elapsed));
    }
    let elapsed = start.elapsed().as_millis() as u64;

    let mut stdout = String::new();
    if let Some(mut out) = child.stdout.take() {
        out.read_to_string(&mut stdout)?;
    }
    parse_solver_output(formula, &stdout, &solver_id, elapsed)
}

pub(crate) fn parse_solver_output(
    formula: &Formula,
    stdout: &str,
    solver_id: &str,
    elapsed_ms: u64,
) -> Result<SolverVerdict> {
    let mut lines = stdout.lines().skip_while(|l| l.trim().is_empty());
    let first = lines.next().unwrap_or("").trim();
    match first {
        "unsat" => Ok(SolverVerdict::unsat(solver_id, elapsed_ms)),
        "unknown" | "timeout" => Ok(SolverVerdict::unknown(solver_id, elapsed_ms)),
        "sat" => {
            let rest: Vec<&str> = lines.collect();
            let model = parse_model(&rest.join("\n"))?;
            let mut witness = Witness::new();
            for (name, width) in formula.declarations() {
                let value = model.get(name).copied().unwrap_or(0);
                if value > mask(*width) {
                    return Err(Error::infra(format!(
                        "model value for {name} exceeds {width} bits"
                    )));
                }
                witness.insert(name.clone(), value as u64);
            }
            SolverVerdict::verified_sat(formula, witness, solver_id, elapsed_ms).ok_or_else(|| {
                Error::infra(format!("{solver_id} returned a model that does not satisfy the formula"))
            })
        }
        other => Err(Error::infra(format!(
            "unexpected solver output from {solver_id}: {other:?}"
        ))),
    }
}

#[derive(Debug, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                tokens.push(c.to_string());
                chars.next();
            }
            ';' => {
                while chars.next().is_some_and(|c| c != '\n') {}
            }
            '|' => {
                chars.next();
                let mut sym = String::new();
                loop {
                    match chars.next() {
                        Some('|') => break,
                        Some(ch) => sym.push(ch),
                        None => return Err(Error::infra("unterminated quoted symbol in model")),
                    }
                }
                tokens.push(sym);
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut atom = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' {
                        break;
                    }
                    atom.push(ch);
                    chars.next();
                }
                tokens.push(atom);
            }
        }
    }
    Ok(tokens)
}

fn parse_sexps(tokens: &[String]) -> Result<Vec<Sexp>> {
    fn one(tokens: &[String], pos: &mut usize) -> Result<Sexp> {
        let tok = tokens
            .get(*pos)
            .ok_or_else(|| Error::infra("truncated model"))?;
        *pos += 1;
        match tok.as_str() {
            "(" => {
                let mut items = Vec::new();
                loop {
                    match tokens.get(*pos).map(String::as_str) {
                        Some(")") => {
                            *pos += 1;
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(one(tokens, pos)?),
                        None => return Err(Error::infra("unbalanced parentheses in model")),
                    }
                }
            }
            ")" => Err(Error::infra("unexpected ')' in model")),
            atom => Ok(Sexp::Atom(atom.to_string())),
        }
    }
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < tokens.len() {
        out.push(one(tokens, &mut pos)?);
    }
    Ok(out)
}

fn bv_value(s: &Sexp) -> Option<u128> {
    match s {
        Sexp::Atom(a) if a.starts_with("#b") => u128::from_str_radix(&a[2..], 2).ok(),
        Sexp::Atom(a) if a.starts_with("#x") => u128::from_str_radix(&a[2..], 16).ok(),
        // (_ bv42 32)
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(bv), Sexp::Atom(_)] if u == "_" => {
                bv.strip_prefix("bv")?.parse().ok()
            }
            _ => None,
        },
        _ => None,
    }
}

/// Extracts `(define-fun NAME () SORT VALUE)` entries from a model.
fn parse_model(text: &str) -> Result<std::collections::BTreeMap<String, u128>> {
    let sexps = parse_sexps(&tokenize(text)?)?;
    let mut out = std::collections::BTreeMap::new();
    let mut stack: Vec<&Sexp> = sexps.iter().collect();
    while let Some(s) = stack.pop() {
        let Sexp::List(items) = s else { continue };
        match items.as_slice() {
            [Sexp::Atom(df), Sexp::Atom(name), Sexp::List(args), _sort, value]
                if df == "define-fun" && args.is_empty() =>
            {
                let v = bv_value(value).ok_or_else(|| {
                    Error::infra(format!("unparseable model value for {name}"))
                })?;
                out.insert(name.clone(), v);
            }
            // Older solvers wrap the model in (model ...).
            _ => stack.extend(items.iter()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::{Outcome, Pred, Term};

    fn wrap() -> Formula {
        let e = Term::var("n", 32).zext(32).mul(Term::constant(4, 64));
        Formula::closed(Pred::Uge(e, Term::constant(1 << 32, 64))).unwrap()
    }

    #[test]
    fn parses_z3_style_model() {
        let out = "sat\n(\n  (define-fun n () (_ BitVec 32)\n    #x40000001)\n)\n";
        let v = parse_solver_output(&wrap(), out, "z3", 3).unwrap();
        assert_eq!(v.outcome, Outcome::Sat);
        assert_eq!(v.witness.unwrap()["n"], (1 << 30) + 1);
    }

    #[test]
    fn parses_binary_and_indexed_literals() {
        let bin = format!("sat\n((define-fun n () (_ BitVec 32) #b{:032b}))", 1u64 << 30);
        let v = parse_solver_output(&wrap(), &bin, "cvc5", 0).unwrap();
        assert_eq!(v.witness.unwrap()["n"], 1 << 30);

        let idx = "sat\n(model (define-fun n () (_ BitVec 32) (_ bv3221225472 32)))";
        let v = parse_solver_output(&wrap(), idx, "old", 0).unwrap();
        assert_eq!(v.witness.unwrap()["n"], 3 << 30);
    }

    #[test]
    fn unsat_and_unknown() {
        let v = parse_solver_output(&wrap(), "unsat\n(error \"model is not available\")", "z3", 0)
            .unwrap();
        assert_eq!(v.outcome, Outcome::Unsat);
        let v = parse_solver_output(&wrap(), "unknown\n", "z3", 0).unwrap();
        assert_eq!(v.outcome, Outcome::Unknown);
    }

    #[test]
    fn bogus_model_is_rejected() {
        let out = "sat\n((define-fun n () (_ BitVec 32) #x00000001))";
        let err = parse_solver_output(&wrap(), out, "liar", 0).unwrap_err();
        assert!(err.is_infrastructure());
        assert!(parse_solver_output(&wrap(), "segfault", "x", 0).is_err());
        assert!(parse_solver_output(&wrap(), "sat\n((define-fun n ()", "x", 0).is_err());
    }

    #[test]
    fn missing_solver_is_infrastructure_error() {
        let err = solve_external(&wrap(), "definitely-not-a-solver-binary", 1000).unwrap_err();
        assert!(err.is_infrastructure());
    }
}
