// SPDX-License-Identifier: Apache-2.0

//! Python frontend: statement-level detectors for injection, path
//! traversal, fast password hashing and weak randomness.

mod lexer;
mod sql;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use lexer::{statements, PyTok, Stmt};
pub use sql::{sql_template, SqlPart, SqlTemplate};

use crate::model::CweId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PyKind {
    SqlConcat,
    ShellConcat,
    PathTraversal,
    FastPasswordHash,
    WeakRandom,
}

impl PyKind {
    pub fn detector_id(self) -> &'static str {
        match self {
            PyKind::SqlConcat => "py.sql-concat",
            PyKind::ShellConcat => "py.shell-concat",
            PyKind::PathTraversal => "py.path-traversal",
            PyKind::FastPasswordHash => "py.fast-password-hash",
            PyKind::WeakRandom => "py.weak-random",
        }
    }

    pub fn cwe(self) -> CweId {
        match self {
            PyKind::SqlConcat => CweId::SQL_INJECTION,
            PyKind::ShellConcat => CweId::OS_COMMAND_INJECTION,
            PyKind::PathTraversal => CweId::PATH_TRAVERSAL,
            PyKind::FastPasswordHash => CweId::WEAK_PASSWORD_HASH,
            PyKind::WeakRandom => CweId::WEAK_RANDOM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PySite {
    pub artifact_id: String,
    pub detector_id: String,
    pub cwe: CweId,
    pub line: u32,
    pub kind: PyKind,
    pub evidence: String,
}

const SQL_WORDS: &[&str] = &["SELECT", "INSERT", "UPDATE", "DELETE"];
const KDF_MARKERS: &[&str] = &["bcrypt", "scrypt", "argon2", "pbkdf2"];
const FAST_HASHES: &[&str] = &["md5", "sha1", "sha256"];
const SECRET_NAMES: &[&str] = &["password", "passwd", "pwd", "secret"];
const SENSITIVE_SEGMENTS: &[&str] = &["token", "key", "secret", "nonce", "iv", "session", "salt", "otp"];
const SUBPROCESS_CALLS: &[&str] = &["run", "call", "Popen", "check_output", "check_call", "getoutput", "getstatusoutput"];
const ARCHIVE_LISTINGS: &[&str] = &["namelist", "getmembers", "infolist", "getnames"];
const NORMALIZERS: &[&str] = &["realpath", "abspath", "normpath", "resolve"];
const PREFIX_CHECKS: &[&str] = &["startswith", "commonpath", "commonprefix", "is_relative_to"];

/// Dotted name ending at token `end`, e.g. `os.path.join`. A receiver
/// that is not a plain name, as in `"-".join(x)`, shows as `?.join`.
fn dotted_before(toks: &[PyTok], end: usize) -> String {
    let mut parts = vec![];
    let mut i = end;
    while let Some(PyTok::Name(n)) = toks.get(i) {
        parts.push(n.clone());
        if i >= 2 && toks[i - 1].is_op(".") && matches!(toks[i - 2], PyTok::Name(_)) {
            i -= 2;
        } else {
            break;
        }
    }
    parts.reverse();
    let joined = parts.join(".");
    if i >= 1 && toks[i - 1].is_op(".") {
        format!("?.{joined}")
    } else {
        joined
    }
}

/// Index of the bracket matching the opener at `open`.
fn matching(toks: &[PyTok], open: usize) -> Option<usize> {
    let mut depth = 0;
    for (j, t) in toks.iter().enumerate().skip(open) {
        match t {
            PyTok::Op(o) if o == "(" || o == "[" || o == "{" => depth += 1,
            PyTok::Op(o) if o == ")" || o == "]" || o == "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

/// Calls in a statement: (dotted callee, argument ranges).
fn calls(toks: &[PyTok]) -> Vec<(String, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if !toks[i].is_op("(") || i == 0 || !matches!(toks[i - 1], PyTok::Name(_)) {
            continue;
        }
        let callee = dotted_before(toks, i - 1);
        let close = matching(toks, i).unwrap_or(toks.len());
        let mut args = Vec::new();
        let mut depth = 0;
        let mut start = i + 1;
        for j in i + 1..close {
            match &toks[j] {
                PyTok::Op(o) if o == "(" || o == "[" || o == "{" => depth += 1,
                PyTok::Op(o) if o == ")" || o == "]" || o == "}" => depth -= 1,
                PyTok::Op(o) if o == "," && depth == 0 => {
                    args.push((start, j));
                    start = j + 1;
                }
                _ => {}
            }
        }
        if start < close {
            args.push((start, close));
        }
        out.push((callee, args));
    }
    out
}

fn keyword_arg<'t>(toks: &'t [PyTok], args: &[(usize, usize)], key: &str) -> Option<&'t [PyTok]> {
    args.iter().find_map(|&(s, e)| {
        (e > s + 1 && toks[s].is_name(key) && toks[s + 1].is_op("=")).then(|| &toks[s + 2..e])
    })
}

fn has_sql_word(body: &str) -> bool {
    body.split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .any(|w| SQL_WORDS.iter().any(|k| w.eq_ignore_ascii_case(k)))
}

fn fstring_interpolates(tok: &PyTok) -> bool {
    match tok {
        PyTok::Str { body, .. } if tok.is_fstring() => body.replace("{{", "").contains('{'),
        _ => false,
    }
}

/// Whether a token range builds a SQL string from non-literal parts.
fn builds_sql(toks: &[PyTok]) -> bool {
    let has_sql = toks
        .iter()
        .any(|t| matches!(t, PyTok::Str { body, .. } if has_sql_word(body)));
    if !has_sql {
        return false;
    }
    let has_name = toks.iter().any(|t| matches!(t, PyTok::Name(_)));
    toks.iter().enumerate().any(|(i, t)| {
        if fstring_interpolates(t) {
            return true;
        }
        if !matches!(t, PyTok::Str { .. }) {
            return false;
        }
        let next = toks.get(i + 1);
        let prev = i.checked_sub(1).map(|p| &toks[p]);
        next.is_some_and(|n| n.is_op("%"))
            || (next.is_some_and(|n| n.is_op(".")) && toks.get(i + 2).is_some_and(|n| n.is_name("format")))
            || ((next.is_some_and(|n| n.is_op("+")) || prev.is_some_and(|p| p.is_op("+"))) && has_name)
    })
}

/// Whether a range is a plain literal with nothing interpolated.
fn is_literal(toks: &[PyTok]) -> bool {
    !toks.is_empty()
        && toks.iter().all(|t| {
            matches!(t, PyTok::Str { .. } | PyTok::Num(_))
                || t.is_op("[")
                || t.is_op("]")
                || t.is_op("(")
                || t.is_op(")")
                || t.is_op(",")
        })
        && !toks.iter().any(fstring_interpolates)
}

fn names_in(toks: &[PyTok]) -> impl Iterator<Item = &str> {
    toks.iter().filter_map(PyTok::name)
}

fn segments(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = name.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '.' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if c.is_uppercase() && i > 0 && chars[i - 1].is_lowercase() && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_sensitive_name(name: &str) -> bool {
    segments(name)
        .iter()
        .any(|s| SENSITIVE_SEGMENTS.contains(&s.as_str()) || s == "keys" || s == "tokens")
}

fn is_secret_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    SECRET_NAMES.iter().any(|s| lower.contains(s))
}

/// Simple assignment: (target names, operator, value range).
fn assignment(st: &Stmt) -> Option<(Vec<String>, &str, (usize, usize))> {
    let toks = &st.toks;
    let mut depth = 0;
    for (i, t) in toks.iter().enumerate() {
        match t {
            PyTok::Op(o) if o == "(" || o == "[" || o == "{" => depth += 1,
            PyTok::Op(o) if o == ")" || o == "]" || o == "}" => depth -= 1,
            PyTok::Op(o) if depth == 0 && (o == "=" || o == "+=" || o == ":=") => {
                let mut lhs = &toks[..i];
                // Drop an annotation: `x: str = ...`.
                if let Some(colon) = lhs.iter().position(|t| t.is_op(":")) {
                    lhs = &lhs[..colon];
                }
                let targets: Vec<String> = lhs
                    .split(|t| t.is_op(","))
                    .filter_map(|part| match part {
                        [PyTok::Name(n)] => Some(n.clone()),
                        [PyTok::Name(a), PyTok::Op(dot), PyTok::Name(b)] if dot == "." => Some(format!("{a}.{b}")),
                        [.., PyTok::Op(close)] if close == "]" => match part.first() {
                            Some(PyTok::Name(n)) => Some(n.clone()),
                            _ => None,
                        },
                        _ => None,
                    })
                    .collect();
                if targets.is_empty() {
                    return None;
                }
                return Some((targets, o.as_str(), (i + 1, toks.len())));
            }
            _ => {}
        }
    }
    None
}

#[derive(Default)]
struct Scope {
    id: usize,
    /// SQL strings built from non-literal parts: name -> (line, evidence).
    sql_built: BTreeMap<String, (u32, String)>,
    /// Names holding a SQL literal that later `+=` may extend.
    sql_literal: BTreeSet<String>,
    /// Names last assigned a plain literal.
    literals: BTreeSet<String>,
    /// Archive member or request derived names.
    path_tainted: BTreeSet<String>,
    /// Hash objects from a fast hash constructor.
    hashers: BTreeSet<String>,
    /// Values derived from the non-cryptographic generator.
    random_derived: BTreeSet<String>,
}

struct Ctx<'a> {
    artifact_id: &'a str,
    has_kdf: bool,
    random_imports: BTreeSet<String>,
    sites: Vec<PySite>,
    /// Path sites wait for the end of their scope: a later
    /// normalize-and-compare check suppresses them.
    path_sites: Vec<(usize, PySite)>,
    /// Per scope: (normalizes a path, checks a prefix).
    path_checks: BTreeMap<usize, (bool, bool)>,
}

impl Ctx<'_> {
    fn push(&mut self, kind: PyKind, line: u32, evidence: &str) {
        self.sites.push(PySite {
            artifact_id: self.artifact_id.to_string(),
            detector_id: kind.detector_id().to_string(),
            cwe: kind.cwe(),
            line,
            kind,
            evidence: evidence.to_string(),
        });
    }

    fn push_path(&mut self, scope: usize, line: u32, evidence: &str) {
        self.path_sites.push((
            scope,
            PySite {
                artifact_id: self.artifact_id.to_string(),
                detector_id: PyKind::PathTraversal.detector_id().to_string(),
                cwe: PyKind::PathTraversal.cwe(),
                line,
                kind: PyKind::PathTraversal,
                evidence: evidence.to_string(),
            },
        ));
    }

    fn uses_random(&self, toks: &[PyTok], scope: &Scope) -> bool {
        let direct = toks.iter().enumerate().any(|(i, t)| {
            if !t.is_op("(") || i == 0 {
                return false;
            }
            let callee = dotted_before(toks, i - 1);
            let mut parts = callee.split('.');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("random"), Some(f), None) => f != "SystemRandom" && f != "seed",
                (Some("np" | "numpy"), Some("random"), Some(_)) => true,
                (Some(f), None, None) => self.random_imports.contains(f),
                _ => false,
            }
        });
        direct || names_in(toks).any(|n| scope.random_derived.contains(n))
    }
}

/// Finds Python candidate sites. Deterministic; results sorted by line
/// then detector.
pub fn extract_py_sites(artifact_id: &str, source: &str) -> Vec<PySite> {
    let stmts = statements(source);
    let all_names: BTreeSet<String> = stmts
        .iter()
        .flat_map(|s| s.toks.iter())
        .filter_map(|t| match t {
            PyTok::Name(n) => Some(n.to_ascii_lowercase()),
            PyTok::Str { body, .. } => Some(body.to_ascii_lowercase()),
            _ => None,
        })
        .collect();
    let has_kdf = all_names
        .iter()
        .any(|n| KDF_MARKERS.iter().any(|k| n.contains(k)));

    let mut random_imports = BTreeSet::new();
    for st in &stmts {
        if st.starts_with_keyword("from") && st.toks.get(1).is_some_and(|t| t.is_name("random")) {
            for t in st.toks.iter().skip(3) {
                if let PyTok::Name(n) = t {
                    if n != "SystemRandom" && n != "as" {
                        random_imports.insert(n.clone());
                    }
                }
            }
        }
    }

    let mut ctx = Ctx {
        artifact_id,
        has_kdf,
        random_imports,
        sites: Vec::new(),
        path_sites: Vec::new(),
        path_checks: BTreeMap::new(),
    };

    // Each `def` opens a scope that lasts while statements are indented
    // deeper than it.
    let mut scope_stack: Vec<(usize, String, Scope)> = vec![(0, String::new(), Scope::default())];
    let mut next_id = 1;
    for st in &stmts {
        while scope_stack.len() > 1 && st.indent <= scope_stack.last().expect("non-empty").0 {
            scope_stack.pop();
        }
        let is_def = st.starts_with_keyword("def")
            || (st.starts_with_keyword("async") && st.toks.get(1).is_some_and(|t| t.is_name("def")));
        if is_def {
            let name_at = if st.starts_with_keyword("async") { 2 } else { 1 };
            let fname = st.toks.get(name_at).and_then(PyTok::name).unwrap_or("").to_string();
            let scope = Scope {
                id: next_id,
                ..Scope::default()
            };
            next_id += 1;
            scope_stack.push((st.indent, fname, scope));
            continue;
        }
        let (_, fname, scope) = scope_stack.last_mut().expect("module scope");
        let fname = fname.clone();
        scan_stmt(&mut ctx, st, scope, &fname);
    }

    let mut sites = ctx.sites;
    for (scope, site) in ctx.path_sites {
        if ctx.path_checks.get(&scope) != Some(&(true, true)) {
            sites.push(site);
        }
    }
    sites.sort_by(|a, b| (a.line, a.kind).cmp(&(b.line, b.kind)));
    sites.dedup();
    sites
}

fn scan_stmt(ctx: &mut Ctx<'_>, st: &Stmt, scope: &mut Scope, fname: &str) {
    let toks = &st.toks;
    let call_list = calls(toks);

    let flags = ctx.path_checks.entry(scope.id).or_default();
    for (callee, _) in &call_list {
        let last = callee.rsplit('.').next().unwrap_or("");
        flags.0 |= NORMALIZERS.contains(&last);
        flags.1 |= PREFIX_CHECKS.contains(&last);
    }

    // Archive iteration taints the loop variable.
    if st.starts_with_keyword("for") {
        if let Some(in_at) = toks.iter().position(|t| t.is_name("in")) {
            let iter = &toks[in_at + 1..];
            let from_archive = call_list.iter().any(|(c, _)| {
                ARCHIVE_LISTINGS.iter().any(|l| c.ends_with(&format!(".{l}")))
            }) || names_in(iter).any(|n| scope.path_tainted.contains(n));
            let from_request = names_in(iter).any(|n| n == "request");
            if from_archive || from_request {
                for n in names_in(&toks[1..in_at]) {
                    scope.path_tainted.insert(n.to_string());
                }
            }
        }
    }

    let assign = assignment(st);

    // SQL construction and use.
    for (callee, args) in &call_list {
        let last = callee.rsplit('.').next().unwrap_or("");
        if last != "execute" && last != "executemany" {
            continue;
        }
        let Some(&(s, e)) = args.first() else { continue };
        let arg = &toks[s..e];
        if builds_sql(arg) {
            ctx.push(PyKind::SqlConcat, st.line, &st.text);
        } else if let [PyTok::Name(n)] = arg {
            if let Some((line, ev)) = scope.sql_built.get(n).cloned() {
                ctx.push(PyKind::SqlConcat, line, &ev);
            }
        }
    }

    if let Some((targets, op, (s, e))) = &assign {
        let value = &toks[*s..*e];
        for target in targets {
            let extends_literal = *op == "+=" && scope.sql_literal.contains(target) && !is_literal(value);
            if builds_sql(value) || extends_literal {
                scope.sql_built.insert(target.clone(), (st.line, st.text.clone()));
            } else if *op == "=" {
                scope.sql_built.remove(target);
                let inherits = match value {
                    [PyTok::Name(n)] => scope.sql_built.get(n).cloned(),
                    _ => None,
                };
                if let Some(info) = inherits {
                    scope.sql_built.insert(target.clone(), info);
                }
            }
            if value.iter().any(|t| matches!(t, PyTok::Str { body, .. } if has_sql_word(body))) && is_literal(value) {
                scope.sql_literal.insert(target.clone());
            }
            if is_literal(value) && *op == "=" {
                scope.literals.insert(target.clone());
            } else {
                scope.literals.remove(target);
            }
        }
    }

    // Shell commands.
    for (callee, args) in &call_list {
        let shell_call = matches!(callee.as_str(), "os.system" | "os.popen" | "system" | "popen" | "commands.getoutput");
        let subprocess = callee
            .strip_prefix("subprocess.")
            .is_some_and(|f| SUBPROCESS_CALLS.contains(&f));
        let shell_true = keyword_arg(toks, args, "shell").is_some_and(|v| matches!(v, [PyTok::Name(t)] if t == "True"));
        let getoutput = matches!(callee.as_str(), "subprocess.getoutput" | "subprocess.getstatusoutput");
        if !(shell_call || (subprocess && (shell_true || getoutput))) {
            continue;
        }
        let Some(&(s, e)) = args.first() else { continue };
        let cmd = &toks[s..e];
        let computed = match cmd {
            [PyTok::Name(n)] => !scope.literals.contains(n),
            _ => !is_literal(cmd),
        };
        if computed {
            ctx.push(PyKind::ShellConcat, st.line, &st.text);
        }
    }

    // Path traversal: taint from requests and archives.
    if let Some((targets, _, (s, e))) = &assign {
        let value = &toks[*s..*e];
        let request = toks[*s..*e].windows(2).any(|w| w[0].is_name("request") && w[1].is_op("."));
        let sanitized = call_list.iter().any(|(c, _)| c.ends_with("secure_filename") || c.ends_with("basename"));
        let tainted = request || names_in(value).any(|n| scope.path_tainted.contains(n));
        for t in targets {
            if tainted && !sanitized {
                scope.path_tainted.insert(t.clone());
            } else {
                scope.path_tainted.remove(t);
            }
        }
    }
    for (callee, args) in &call_list {
        let is_join = matches!(callee.as_str(), "os.path.join" | "path.join" | "join" | "posixpath.join");
        if is_join && args.len() >= 2 {
            let tainted = args[1..].iter().any(|&(s, e)| {
                let arg = &toks[s..e];
                arg.windows(2).any(|w| w[0].is_name("request") && w[1].is_op("."))
                    || names_in(arg).any(|n| scope.path_tainted.contains(n))
            });
            if tainted {
                scope.path_tainted.extend(assign.iter().flat_map(|(t, _, _)| t.clone()));
                ctx.push_path(scope.id, st.line, &st.text);
            }
        }
        let last = callee.rsplit('.').next().unwrap_or("");
        if (last == "extractall" || last == "extract") && callee.contains('.') {
            let filtered = keyword_arg(toks, args, "filter")
                .is_some_and(|v| matches!(v, [PyTok::Str { body, .. }] if body == "data" || body == "tar"))
                || keyword_arg(toks, args, "members").is_some();
            if !filtered {
                ctx.push_path(scope.id, st.line, &st.text);
            }
        }
    }

    // Fast hashes applied to passwords.
    if !ctx.has_kdf {
        for (callee, args) in &call_list {
            let mut parts = callee.rsplit('.');
            let last = parts.next().unwrap_or("");
            let module = parts.next();
            let ctor = module == Some("hashlib") && FAST_HASHES.contains(&last)
                || (module == Some("hashlib") && last == "new"
                    && args.first().is_some_and(|&(s, e)| matches!(&toks[s..e], [PyTok::Str { body, .. }] if FAST_HASHES.contains(&body.to_ascii_lowercase().as_str()))));
            let update = last == "update" && module.is_some_and(|m| scope.hashers.contains(m));
            let arg_secret = args
                .iter()
                .any(|&(s, e)| names_in(&toks[s..e]).any(is_secret_name));
            if (ctor || update) && arg_secret {
                ctx.push(PyKind::FastPasswordHash, st.line, &st.text);
            }
            if ctor {
                if let Some((targets, _, _)) = &assign {
                    scope.hashers.extend(targets.iter().cloned());
                }
            }
        }
    }

    // Weak randomness reaching sensitive names.
    let uses_random = ctx.uses_random(toks, scope);
    if let Some((targets, _, (s, e))) = &assign {
        let value_random = ctx.uses_random(&toks[*s..*e], scope);
        for t in targets {
            if value_random {
                scope.random_derived.insert(t.clone());
                if is_sensitive_name(t) {
                    ctx.push(PyKind::WeakRandom, st.line, &st.text);
                }
            } else {
                scope.random_derived.remove(t);
            }
        }
    } else if st.starts_with_keyword("return") && uses_random && is_sensitive_name(fname) {
        ctx.push(PyKind::WeakRandom, st.line, &st.text);
    } else if uses_random {
        // Sensitive keyword arguments or dict keys fed directly.
        let direct = toks.windows(3).any(|w| {
            matches!((&w[0], &w[1]), (PyTok::Name(k), PyTok::Op(eq)) if eq == "=" && is_sensitive_name(k))
                || matches!((&w[0], &w[1]), (PyTok::Str { body, .. }, PyTok::Op(c)) if c == ":" && is_sensitive_name(body))
        });
        if direct {
            ctx.push(PyKind::WeakRandom, st.line, &st.text);
        }
    }
}
