// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::expr::{
    collect_defines, eval_const, is_macro_like, parse_size_expr, ExprContext, SizeExpr,
};
use super::lexer::{Token, TokenKind};
use super::types::{is_type_start, DeclTable, IntType};
use crate::model::CweId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SiteKind {
    AllocArith,
    CastSign,
    IndexUnchecked,
    UnsafeStrcopy,
}

impl SiteKind {
    pub fn detector_id(self) -> &'static str {
        match self {
            SiteKind::AllocArith => "c.alloc-arith",
            SiteKind::CastSign => "c.cast-sign",
            SiteKind::IndexUnchecked => "c.index-unchecked",
            SiteKind::UnsafeStrcopy => "c.unsafe-strcopy",
        }
    }

    pub fn cwe(self) -> CweId {
        match self {
            SiteKind::AllocArith => CweId::INTEGER_OVERFLOW,
            SiteKind::CastSign => CweId::SIGN_CONVERSION,
            SiteKind::IndexUnchecked | SiteKind::UnsafeStrcopy => CweId::INCORRECT_BUFFER_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSite {
    pub artifact_id: String,
    pub detector_id: String,
    pub cwe: CweId,
    pub line: u32,
    pub col: u32,
    pub kind: SiteKind,
    pub expr: Option<SizeExpr>,
    pub guard_found: bool,
    pub evidence: String,
    /// Upper bounds established by earlier checks that did not suffice to
    /// rule the wrap out. They constrain the solver.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub guard_bounds: BTreeMap<String, u64>,
    /// The expression depends on a guessed type size; never solved.
    #[serde(default)]
    pub low_confidence: bool,
    /// Declared type of the converted variable, for CAST_SIGN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_type: Option<IntType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callee: Option<String>,
}

/// (function, size-parameter indices)
const ALLOCATORS: &[(&str, &[usize])] = &[
    ("malloc", &[0]),
    ("alloca", &[0]),
    ("realloc", &[1]),
    ("calloc", &[0, 1]),
];

const SIZE_PARAMS: &[(&str, &[usize])] = &[
    ("malloc", &[0]),
    ("alloca", &[0]),
    ("calloc", &[0, 1]),
    ("realloc", &[1]),
    ("memcpy", &[2]),
    ("memmove", &[2]),
    ("memset", &[2]),
    ("strncpy", &[2]),
    ("strncat", &[2]),
    ("read", &[2]),
    ("write", &[2]),
    ("recv", &[2]),
    ("fread", &[1, 2]),
    ("fwrite", &[1, 2]),
    ("fgets", &[1]),
    ("snprintf", &[1]),
];

const STRCOPY: &[&str] = &["strcat", "strcpy", "sprintf", "gets"];

const EXITS: &[&str] = &["exit", "abort", "_exit", "err", "errx"];

const OVERFLOW_BUILTINS: &[&str] = &[
    "__builtin_mul_overflow",
    "__builtin_add_overflow",
    "__builtin_umul_overflow",
    "__builtin_umull_overflow",
    "ckd_mul",
    "ckd_add",
];

/// An `if` statement: condition token range and body token range
/// (both half-open, indices into the code token stream).
#[derive(Debug)]
struct IfStmt {
    at: usize,
    cond: (usize, usize),
    body: (usize, usize),
    exits: bool,
}

struct Scan<'a> {
    artifact_id: &'a str,
    source: &'a str,
    toks: Vec<Token>,
    decls: DeclTable,
    defines: BTreeMap<String, u64>,
    width: u32,
    close_of: Vec<Option<usize>>,
    scope_start: Vec<usize>,
    ifs: Vec<IfStmt>,
}

/// Finds candidate sites in C source. `tokens` must come from
/// [`super::tokenize_c`] on the same `source`; comment and preprocessor
/// tokens are skipped except for `#define` constants. Results are sorted
/// by position.
pub fn extract_c_sites(artifact_id: &str, source: &str, tokens: &[Token], width: u32) -> Vec<CandidateSite> {
    let toks: Vec<Token> = tokens
        .iter()
        .filter(|t| t.kind != TokenKind::Other)
        .cloned()
        .collect();
    let defines = collect_defines(tokens, width);
    let decls = DeclTable::scan(&toks, width);

    let n = toks.len();
    let mut close_of = vec![None; n];
    let mut stack = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
            stack.push(i);
        } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
            if let Some(open) = stack.pop() {
                close_of[open] = Some(i);
            }
        }
    }

    let mut scope_start = vec![0; n];
    let mut braces: Vec<usize> = Vec::new();
    let mut top_level_start = 0;
    for (i, t) in toks.iter().enumerate() {
        scope_start[i] = braces.first().map_or(top_level_start, |b| b + 1);
        if t.is_punct("{") {
            braces.push(i);
        } else if t.is_punct("}") {
            braces.pop();
            if braces.is_empty() {
                top_level_start = i + 1;
            }
        }
    }

    let mut scan = Scan {
        artifact_id,
        source,
        toks,
        decls,
        defines,
        width,
        close_of,
        scope_start,
        ifs: Vec::new(),
    };
    scan.ifs = scan.find_ifs();

    let mut sites = Vec::new();
    scan.alloc_sites(&mut sites);
    scan.cast_sites(&mut sites);
    scan.strcopy_sites(&mut sites);
    scan.index_sites(&mut sites);
    sites.sort_by(|a, b| (a.line, a.col, a.kind).cmp(&(b.line, b.col, b.kind)));
    sites.dedup();
    sites
}

impl Scan<'_> {
    fn ctx(&self) -> ExprContext<'_> {
        ExprContext {
            decls: &self.decls,
            defines: &self.defines,
            width: self.width,
        }
    }

    fn max_value(&self) -> u128 {
        (1u128 << self.width) - 1
    }

    fn is_call(&self, i: usize, names: &[&str]) -> bool {
        let t = &self.toks[i];
        t.kind == TokenKind::Ident
            && names.contains(&t.text.as_str())
            && self.toks.get(i + 1).is_some_and(|n| n.is_punct("("))
            && (i == 0
                || !(self.toks[i - 1].is_punct(".")
                    || self.toks[i - 1].is_punct("->")
                    || is_type_start(&self.toks[i - 1], &self.decls.typedefs)
                    || self.toks[i - 1].is_punct("*")
                        && i >= 2
                        && is_type_start(&self.toks[i - 2], &self.decls.typedefs)))
    }

    /// Argument token ranges of the call whose name is at `i`.
    fn call_args(&self, i: usize) -> Option<Vec<(usize, usize)>> {
        let open = i + 1;
        let close = self.close_of[open]?;
        let mut args = Vec::new();
        let mut start = open + 1;
        let mut depth = 0;
        for j in open + 1..close {
            let t = &self.toks[j];
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                depth -= 1;
            } else if t.is_punct(",") && depth == 0 {
                args.push((start, j));
                start = j + 1;
            }
        }
        if start < close || !args.is_empty() {
            args.push((start, close));
        }
        Some(args)
    }

    fn find_ifs(&self) -> Vec<IfStmt> {
        let mut out = Vec::new();
        for (k, t) in self.toks.iter().enumerate() {
            if !t.is_keyword("if") || !self.toks.get(k + 1).is_some_and(|n| n.is_punct("(")) {
                continue;
            }
            let Some(close) = self.close_of[k + 1] else { continue };
            let body_start = close + 1;
            let body_end = match self.toks.get(body_start) {
                Some(b) if b.is_punct("{") => match self.close_of[body_start] {
                    Some(end) => end + 1,
                    None => continue,
                },
                Some(_) => {
                    let mut depth = 0i32;
                    let mut j = body_start;
                    while j < self.toks.len() {
                        let tj = &self.toks[j];
                        if tj.is_punct("(") || tj.is_punct("{") {
                            depth += 1;
                        } else if tj.is_punct(")") || tj.is_punct("}") {
                            depth -= 1;
                        } else if tj.is_punct(";") && depth == 0 {
                            break;
                        }
                        j += 1;
                    }
                    (j + 1).min(self.toks.len())
                }
                None => continue,
            };
            let exits = (body_start..body_end).any(|j| {
                let b = &self.toks[j];
                b.is_keyword("return") || b.is_keyword("goto") || self.is_call(j, EXITS)
            });
            out.push(IfStmt {
                at: k,
                cond: (k + 2, close),
                body: (body_start, body_end),
                exits,
            });
        }
        out
    }

    /// Splits `range` on a top-level two-character operator such as `||`.
    fn split_top(&self, (start, end): (usize, usize), op: &str) -> Vec<(usize, usize)> {
        let mut parts = Vec::new();
        let mut depth = 0i32;
        let mut s = start;
        for j in start..end {
            let t = &self.toks[j];
            if t.is_punct("(") || t.is_punct("[") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") {
                depth -= 1;
            } else if t.is_punct(op) && depth == 0 {
                parts.push((s, j));
                s = j + 1;
            }
        }
        parts.push((s, end));
        parts
    }

    /// A variable reference, optionally behind a cast: `n`, `(size_t)n`,
    /// `hdr->count`.
    fn var_name(&self, (start, end): (usize, usize)) -> Option<String> {
        let mut i = start;
        if self.toks.get(i).is_some_and(|t| t.is_punct("(")) {
            let close = self.close_of[i]?;
            if close + 1 < end
                && (i + 1..close).all(|j| {
                    is_type_start(&self.toks[j], &self.decls.typedefs) || self.toks[j].is_punct("*")
                })
            {
                i = close + 1;
            } else if close + 1 == end {
                return self.var_name((i + 1, close));
            }
        }
        let first = self.toks.get(i).filter(|t| t.kind == TokenKind::Ident)?;
        let mut name = first.text.clone();
        i += 1;
        while i + 1 < end + 1 && i < end {
            let t = &self.toks[i];
            let next = self.toks.get(i + 1).filter(|n| n.kind == TokenKind::Ident);
            match next {
                Some(nx) if (t.is_punct("->") || t.is_punct(".")) && i + 1 < end => {
                    name.push_str(&t.text);
                    name.push_str(&nx.text);
                    i += 2;
                }
                _ => return None,
            }
        }
        (i == end && !self.defines.contains_key(&name) && !is_macro_like(&name)).then_some(name)
    }

    /// `(variable, relation, other-side range)` for a simple comparison,
    /// normalized so the variable is on the left.
    fn comparison(&self, range: (usize, usize)) -> Option<(String, &'static str, (usize, usize))> {
        let (start, end) = range;
        let mut depth = 0i32;
        let mut found = None;
        for j in start..end {
            let t = &self.toks[j];
            if t.is_punct("(") || t.is_punct("[") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") {
                depth -= 1;
            } else if depth == 0 && t.kind == TokenKind::Punct {
                let op = match t.text.as_str() {
                    ">" => ">",
                    ">=" => ">=",
                    "<" => "<",
                    "<=" => "<=",
                    "==" | "!=" | "&&" | "||" => return None,
                    _ => continue,
                };
                if found.is_some() {
                    return None;
                }
                found = Some((j, op));
            }
        }
        let (j, op) = found?;
        if let Some(v) = self.var_name((start, j)) {
            return Some((v, op, (j + 1, end)));
        }
        let v = self.var_name((j + 1, end))?;
        let flipped = match op {
            ">" => "<",
            ">=" => "<=",
            "<" => ">",
            _ => ">=",
        };
        Some((v, flipped, (start, j)))
    }

    fn const_value(&self, range: (usize, usize)) -> Option<u128> {
        eval_const(&self.toks[range.0..range.1], &self.ctx())
    }

    /// Inclusive upper bounds on variables that hold at `pos`: checks that
    /// exit early when a variable is too large, and enclosing `if` bodies
    /// entered only when it is small enough.
    fn upper_bounds(&self, pos: usize) -> BTreeMap<String, u128> {
        let scope = self.scope_start[pos];
        let mut bounds: BTreeMap<String, u128> = BTreeMap::new();
        let mut note = |name: String, bound: u128| {
            let e = bounds.entry(name).or_insert(bound);
            *e = (*e).min(bound);
        };
        for g in &self.ifs {
            if g.at < scope {
                continue;
            }
            if g.exits && g.body.1 <= pos {
                for part in self.split_top(g.cond, "||") {
                    let Some((v, op, other)) = self.comparison(part) else { continue };
                    let Some(c) = self.const_value(other) else { continue };
                    match op {
                        ">" => note(v, c),
                        ">=" => note(v, c.saturating_sub(1)),
                        _ => {}
                    }
                }
            } else if g.body.0 <= pos && pos < g.body.1 {
                for part in self.split_top(g.cond, "&&") {
                    let Some((v, op, other)) = self.comparison(part) else { continue };
                    let Some(c) = self.const_value(other) else { continue };
                    match op {
                        "<=" => note(v, c),
                        "<" if c > 0 => note(v, c - 1),
                        _ => {}
                    }
                }
            }
        }
        bounds
    }

    /// Whether an early-exit check before `pos` rejects negative values of `var`.
    fn negative_rejected(&self, var: &str, pos: usize) -> bool {
        let scope = self.scope_start[pos];
        self.ifs.iter().filter(|g| g.at >= scope).any(|g| {
            if g.exits && g.body.1 <= pos {
                self.split_top(g.cond, "||").into_iter().any(|part| {
                    matches!(self.comparison(part), Some((v, op, other))
                        if v == var
                            && matches!((op, self.const_value(other)), ("<", Some(0 | 1)) | ("<=", Some(0))))
                })
            } else if g.body.0 <= pos && pos < g.body.1 {
                self.split_top(g.cond, "&&").into_iter().any(|part| {
                    matches!(self.comparison(part), Some((v, op, other))
                        if v == var
                            && matches!((op, self.const_value(other)), (">", Some(0)) | (">=", Some(0 | 1))))
                })
            } else {
                false
            }
        })
    }

    /// The statement containing token `pos`, as written in the source.
    fn evidence(&self, pos: usize) -> String {
        let mut depth = 0i32;
        let mut start = 0;
        let mut j = pos;
        while j > 0 {
            let t = &self.toks[j - 1];
            if t.is_punct(")") {
                depth += 1;
            } else if t.is_punct("(") {
                depth -= 1;
            } else if depth <= 0 && (t.is_punct(";") || t.is_punct("{") || t.is_punct("}")) {
                start = j;
                break;
            }
            j -= 1;
        }
        let mut depth = 0i32;
        let mut end = self.toks.len() - 1;
        for k in pos..self.toks.len() {
            let t = &self.toks[k];
            if t.is_punct("(") {
                depth += 1;
            } else if t.is_punct(")") {
                depth -= 1;
            } else if depth <= 0 && t.is_punct(";") {
                end = k;
                break;
            } else if depth <= 0 && (t.is_punct("{") || t.is_punct("}")) {
                end = k.saturating_sub(1).max(start);
                break;
            }
        }
        let start = start.min(pos);
        let end = end.max(pos);
        self.source[self.toks[start].start..self.toks[end].end].trim().to_string()
    }

    fn site(&self, pos: usize, kind: SiteKind) -> CandidateSite {
        let t = &self.toks[pos];
        CandidateSite {
            artifact_id: self.artifact_id.to_string(),
            detector_id: kind.detector_id().to_string(),
            cwe: kind.cwe(),
            line: t.line,
            col: t.col,
            kind,
            expr: None,
            guard_found: false,
            evidence: self.evidence(pos),
            guard_bounds: BTreeMap::new(),
            low_confidence: false,
            source_type: None,
            callee: None,
        }
    }

    /// `name = <expr>;` or `TYPE name = <expr>;` closest before `pos` in
    /// the same scope: (position of `=`, expression range).
    fn last_assignment(&self, name: &str, pos: usize) -> Option<(usize, (usize, usize))> {
        let scope = self.scope_start[pos];
        (scope.max(1)..pos).rev().find_map(|j| {
            let t = &self.toks[j];
            if !t.is_punct("=") || !self.toks[j - 1].is_ident(name) {
                return None;
            }
            if j >= 2 && (self.toks[j - 2].is_punct(".") || self.toks[j - 2].is_punct("->")) {
                return None;
            }
            let mut depth = 0i32;
            let mut k = j + 1;
            while k < self.toks.len() {
                let tk = &self.toks[k];
                if tk.is_punct("(") || tk.is_punct("[") {
                    depth += 1;
                } else if tk.is_punct(")") || tk.is_punct("]") {
                    depth -= 1;
                } else if depth == 0 && (tk.is_punct(";") || tk.is_punct(",")) {
                    return Some((j, (j + 1, k)));
                }
                k += 1;
            }
            None
        })
    }

    fn mentions(&self, range: (usize, usize), names: &BTreeSet<String>) -> bool {
        (range.0..range.1).any(|j| {
            let t = &self.toks[j];
            t.kind == TokenKind::Ident && names.contains(&t.text)
        })
    }

    fn alloc_sites(&self, out: &mut Vec<CandidateSite>) {
        for i in 0..self.toks.len() {
            let Some((_, params)) = ALLOCATORS
                .iter()
                .find(|(f, _)| self.is_call(i, &[f]))
            else {
                continue;
            };
            let Some(args) = self.call_args(i) else { continue };
            let Some(ranges) = params.iter().map(|p| args.get(*p).copied()).collect::<Option<Vec<_>>>() else {
                continue;
            };
            let ctx = self.ctx();
            let mut low_confidence = false;
            let mut parts = Vec::new();
            for &(s, e) in &ranges {
                let Some(p) = parse_size_expr(&self.toks[s..e], s, &ctx) else {
                    break;
                };
                low_confidence |= p.low_confidence;
                parts.push(p.expr);
            }
            if parts.len() != ranges.len() {
                continue;
            }
            let mut expr = parts
                .into_iter()
                .reduce(SizeExpr::mul)
                .expect("allocators have a size parameter");

            // A size computed into a local just before the call.
            let mut post_checked = false;
            if let SizeExpr::Var { name } = &expr {
                if let Some((eq, rhs)) = self.last_assignment(name, i) {
                    if let Some(p) = parse_size_expr(&self.toks[rhs.0..rhs.1], rhs.0, &ctx) {
                        if p.expr.has_arith() {
                            let size_var = BTreeSet::from([name.clone()]);
                            post_checked = self.ifs.iter().any(|g| {
                                g.at > eq
                                    && g.body.1 <= i
                                    && g.exits
                                    && self.mentions(g.cond, &size_var)
                                    && (g.cond.0..g.cond.1).any(|j| self.toks[j].is_punct("/"))
                            });
                            low_confidence |= p.low_confidence;
                            expr = p.expr;
                        }
                    }
                }
            }

            let vars = expr.vars();
            if vars.is_empty() || !expr.has_arith() {
                continue;
            }
            if expr.eval_exact(&|_| Some(1)).is_none_or(|v| v == 0) {
                continue;
            }

            let var_set: BTreeSet<String> = vars.iter().cloned().collect();
            let checked_builtin = (self.scope_start[i]..i).any(|j| {
                self.is_call(j, OVERFLOW_BUILTINS)
                    && self.close_of[j + 1].is_some_and(|c| self.mentions((j + 2, c), &var_set))
            });
            let bounds = self.upper_bounds(i);
            let max = self.max_value();
            let relevant: BTreeMap<String, u128> = vars
                .iter()
                .filter_map(|v| bounds.get(v).map(|b| (v.clone(), (*b).min(max))))
                .collect();
            let fully_bounded = relevant.len() == vars.len()
                && expr
                    .eval_exact(&|v| relevant.get(v).copied())
                    .is_some_and(|m| m <= max);

            let mut site = self.site(i, SiteKind::AllocArith);
            site.callee = Some(self.toks[i].text.clone());
            site.guard_found = fully_bounded || post_checked || checked_builtin;
            site.guard_bounds = relevant
                .into_iter()
                .map(|(k, v)| (k, u64::try_from(v).unwrap_or(u64::MAX)))
                .collect();
            site.low_confidence = low_confidence;
            site.expr = Some(expr);
            out.push(site);
        }
    }

    fn signed_var_at(&self, range: (usize, usize)) -> Option<(usize, String, IntType)> {
        let name = self.var_name(range)?;
        let pos = (range.0..range.1).rev().find(|j| self.toks[*j].kind == TokenKind::Ident)?;
        if name.contains("->") || name.contains('.') {
            return None;
        }
        // An explicit cast must target an unsigned type.
        if self.toks[range.0].is_punct("(") && range.1 - range.0 > 1 {
            let close = self.close_of[range.0]?;
            if close + 1 < range.1 {
                let unsigned = (range.0 + 1..close).any(|j| {
                    let t = &self.toks[j];
                    t.is_keyword("unsigned") || t.is_ident("size_t") || t.text.starts_with("uint")
                });
                if !unsigned {
                    return None;
                }
            }
        }
        let ty = self.decls.lookup(&name, pos)?;
        let it = ty.int_type().filter(|t| t.signed)?;
        Some((pos, name, it))
    }

    fn cast_site(&self, at: usize, stmt: usize, name: String, it: IntType, callee: Option<String>) -> CandidateSite {
        let mut site = self.site(at, SiteKind::CastSign);
        site.evidence = self.evidence(stmt);
        site.expr = Some(SizeExpr::cast(self.width, false, SizeExpr::var(name.clone())));
        site.guard_found = self.negative_rejected(&name, at);
        site.source_type = Some(it);
        site.callee = callee;
        site
    }

    /// Variables passed whole into a size parameter, by position.
    fn size_argument_uses(&self) -> Vec<(usize, usize, (usize, usize))> {
        let mut uses = Vec::new();
        for i in 0..self.toks.len() {
            let Some((_, params)) = SIZE_PARAMS.iter().find(|(f, _)| self.is_call(i, &[f])) else {
                continue;
            };
            let Some(args) = self.call_args(i) else { continue };
            for p in params.iter() {
                if let Some(range) = args.get(*p) {
                    uses.push((i, *p, *range));
                }
            }
        }
        uses
    }

    fn cast_sites(&self, out: &mut Vec<CandidateSite>) {
        let uses = self.size_argument_uses();
        for &(call, _, range) in &uses {
            if let Some((pos, name, it)) = self.signed_var_at(range) {
                out.push(self.cast_site(pos, call, name, it, Some(self.toks[call].text.clone())));
            }
        }
        // `unsigned_var = signed_var;` where the unsigned variable later
        // reaches a size parameter.
        for j in 1..self.toks.len() {
            if !self.toks[j].is_punct("=") || self.toks[j - 1].kind != TokenKind::Ident {
                continue;
            }
            let target = &self.toks[j - 1].text;
            let Some(tt) = self.decls.lookup(target, j - 1) else { continue };
            if !tt.is_unsigned_int() {
                continue;
            }
            let Some((_, rhs)) = self.last_assignment(target, j + 1).filter(|(eq, _)| *eq == j) else {
                continue;
            };
            let Some((pos, name, it)) = self.signed_var_at(rhs) else { continue };
            let reaches_size = uses.iter().any(|&(call, _, r)| {
                call > j && self.var_name(r).as_deref() == Some(target.as_str())
            });
            if reaches_size {
                out.push(self.cast_site(pos, j, name, it, None));
            }
        }
    }

    fn strcopy_sites(&self, out: &mut Vec<CandidateSite>) {
        for i in 0..self.toks.len() {
            if self.is_call(i, STRCOPY) {
                let mut site = self.site(i, SiteKind::UnsafeStrcopy);
                site.callee = Some(self.toks[i].text.clone());
                out.push(site);
            }
        }
    }

    fn index_sites(&self, out: &mut Vec<CandidateSite>) {
        for a in 0..self.toks.len().saturating_sub(3) {
            let (arr, open, idx, close) = (&self.toks[a], &self.toks[a + 1], &self.toks[a + 2], &self.toks[a + 3]);
            if arr.kind != TokenKind::Ident
                || !open.is_punct("[")
                || idx.kind != TokenKind::Ident
                || !close.is_punct("]")
                || self.decls.is_declarator(a)
                || is_macro_like(&idx.text)
                || self.defines.contains_key(&idx.text)
            {
                continue;
            }
            if a > 0 && (self.toks[a - 1].is_punct(".") || self.toks[a - 1].is_punct("->")) {
                continue;
            }
            let scope = self.scope_start[a];
            let compared = (scope.max(1)..a).any(|j| {
                let t = &self.toks[j];
                if !(t.is_punct("<") || t.is_punct("<=") || t.is_punct(">") || t.is_punct(">=")) {
                    return false;
                }
                let (l, r) = (&self.toks[j - 1], self.toks.get(j + 1));
                let other = if l.is_ident(&idx.text) {
                    r
                } else if r.is_some_and(|r| r.is_ident(&idx.text)) {
                    Some(l)
                } else {
                    return false;
                };
                other.is_some_and(|o| !(o.kind == TokenKind::IntLiteral && o.text.trim_end_matches(['u', 'U', 'l', 'L']) == "0"))
            });
            if !compared {
                out.push(self.site(a, SiteKind::IndexUnchecked));
            }
        }
    }
}
