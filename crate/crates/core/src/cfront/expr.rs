// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{parse_int_literal, Token, TokenKind};
use super::types::{resolve_type, is_type_start, CType, DeclTable, UNKNOWN_TYPE_BYTES};

/// Arithmetic tree of an allocation size or converted value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum SizeExpr {
    Var { name: String },
    Const { value: u64 },
    SizeOf { type_name: String, bytes: u64 },
    Mul { lhs: Box<SizeExpr>, rhs: Box<SizeExpr> },
    Add { lhs: Box<SizeExpr>, rhs: Box<SizeExpr> },
    Cast { target_width: u32, signed: bool, inner: Box<SizeExpr> },
}

impl SizeExpr {
    pub fn var(name: impl Into<String>) -> SizeExpr {
        SizeExpr::Var { name: name.into() }
    }

    pub fn constant(value: u64) -> SizeExpr {
        SizeExpr::Const { value }
    }

    pub fn mul(lhs: SizeExpr, rhs: SizeExpr) -> SizeExpr {
        SizeExpr::Mul {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn add(lhs: SizeExpr, rhs: SizeExpr) -> SizeExpr {
        SizeExpr::Add {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn cast(target_width: u32, signed: bool, inner: SizeExpr) -> SizeExpr {
        SizeExpr::Cast {
            target_width,
            signed,
            inner: Box::new(inner),
        }
    }

    /// Same tree with every `SizeOf` replaced by its byte constant.
    pub fn normalized(&self) -> SizeExpr {
        match self {
            SizeExpr::SizeOf { bytes, .. } => SizeExpr::constant(*bytes),
            SizeExpr::Var { .. } | SizeExpr::Const { .. } => self.clone(),
            SizeExpr::Mul { lhs, rhs } => SizeExpr::mul(lhs.normalized(), rhs.normalized()),
            SizeExpr::Add { lhs, rhs } => SizeExpr::add(lhs.normalized(), rhs.normalized()),
            SizeExpr::Cast {
                target_width,
                signed,
                inner,
            } => SizeExpr::cast(*target_width, *signed, inner.normalized()),
        }
    }

    /// Variable names in first-occurrence order, without duplicates.
    pub fn vars(&self) -> Vec<String> {
        fn walk(e: &SizeExpr, out: &mut Vec<String>) {
            match e {
                SizeExpr::Var { name } => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                SizeExpr::Const { .. } | SizeExpr::SizeOf { .. } => {}
                SizeExpr::Mul { lhs, rhs } | SizeExpr::Add { lhs, rhs } => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
                SizeExpr::Cast { inner, .. } => walk(inner, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn has_arith(&self) -> bool {
        match self {
            SizeExpr::Mul { .. } | SizeExpr::Add { .. } => true,
            SizeExpr::Cast { inner, .. } => inner.has_arith(),
            _ => false,
        }
    }

    /// Exact value with every variable bound through `value_of`, using
    /// unbounded arithmetic (casts reduce modulo their width). `None` on
    /// overflow of the 128-bit evaluator or a missing binding.
    pub fn eval_exact(&self, value_of: &dyn Fn(&str) -> Option<u128>) -> Option<u128> {
        match self {
            SizeExpr::Var { name } => value_of(name),
            SizeExpr::Const { value } => Some(u128::from(*value)),
            SizeExpr::SizeOf { bytes, .. } => Some(u128::from(*bytes)),
            SizeExpr::Mul { lhs, rhs } => lhs.eval_exact(value_of)?.checked_mul(rhs.eval_exact(value_of)?),
            SizeExpr::Add { lhs, rhs } => lhs.eval_exact(value_of)?.checked_add(rhs.eval_exact(value_of)?),
            SizeExpr::Cast {
                target_width, inner, ..
            } => {
                let v = inner.eval_exact(value_of)?;
                Some(if *target_width >= 128 {
                    v
                } else {
                    v & ((1u128 << target_width) - 1)
                })
            }
        }
    }
}

impl fmt::Display for SizeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeExpr::Var { name } => write!(f, "{name}"),
            SizeExpr::Const { value } => write!(f, "{value}"),
            SizeExpr::SizeOf { type_name, .. } => write!(f, "sizeof({type_name})"),
            SizeExpr::Mul { lhs, rhs } => write!(f, "({lhs} * {rhs})"),
            SizeExpr::Add { lhs, rhs } => write!(f, "({lhs} + {rhs})"),
            SizeExpr::Cast {
                target_width,
                signed,
                inner,
            } => write!(f, "(({}int{target_width}_t){inner})", if *signed { "" } else { "u" }),
        }
    }
}

/// Names with a fixed value that appear in guards and sizes.
pub(crate) fn limit_constant(name: &str, width: u32) -> Option<u128> {
    let max = |bits: u32| (1u128 << bits) - 1;
    Some(match name {
        "SIZE_MAX" | "UINTPTR_MAX" => max(width),
        "SSIZE_MAX" | "PTRDIFF_MAX" | "INTPTR_MAX" => max(width - 1),
        "UINT_MAX" | "UINT32_MAX" => max(32),
        "INT_MAX" | "INT32_MAX" => max(31),
        "USHRT_MAX" | "UINT16_MAX" => max(16),
        "SHRT_MAX" | "INT16_MAX" => max(15),
        "UCHAR_MAX" | "UINT8_MAX" => max(8),
        "CHAR_MAX" | "SCHAR_MAX" | "INT8_MAX" => max(7),
        "ULONG_MAX" | "ULLONG_MAX" | "UINT64_MAX" => max(64),
        "LONG_MAX" | "LLONG_MAX" | "INT64_MAX" => max(63),
        _ => return None,
    })
}

/// Everything the expression parser needs besides the tokens.
pub struct ExprContext<'a> {
    pub decls: &'a DeclTable,
    pub defines: &'a BTreeMap<String, u64>,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedExpr {
    pub expr: SizeExpr,
    /// Some `sizeof` had to fall back to the unknown-type stand-in.
    pub low_confidence: bool,
}

struct Parser<'t, 'c> {
    toks: &'t [Token],
    pos: usize,
    /// Index of `toks[0]` in the full token stream, for declaration lookup.
    base: usize,
    ctx: &'c ExprContext<'c>,
    low_confidence: bool,
}

/// Parses a size expression made of identifiers, integer literals, `sizeof`,
/// casts, `*`, `+` and parentheses. Anything else (calls, subtraction,
/// division, indexing) makes the whole expression unparseable.
pub fn parse_size_expr(tokens: &[Token], base: usize, ctx: &ExprContext<'_>) -> Option<ParsedExpr> {
    if tokens.is_empty() {
        return None;
    }
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        base,
        ctx,
        low_confidence: false,
    };
    let expr = p.sum()?;
    if p.pos != tokens.len() {
        return None;
    }
    Some(ParsedExpr {
        expr,
        low_confidence: p.low_confidence,
    })
}

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_punct(p)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Option<SizeExpr> {
        let mut lhs = self.product()?;
        while self.eat_punct("+") {
            let rhs = self.product()?;
            lhs = SizeExpr::add(lhs, rhs);
        }
        Some(lhs)
    }

    fn product(&mut self) -> Option<SizeExpr> {
        let mut lhs = self.unary()?;
        while self.eat_punct("*") {
            let rhs = self.unary()?;
            lhs = SizeExpr::mul(lhs, rhs);
        }
        Some(lhs)
    }

    /// Type name inside parentheses starting at `self.pos`, without
    /// consuming the closing `)`.
    fn type_name(&mut self) -> Option<CType> {
        let start = self.pos;
        let mut words = Vec::new();
        while let Some(t) = self.peek() {
            if t.is_keyword("struct") || t.is_keyword("union") || t.is_keyword("enum") {
                words.push(t.text.clone());
                self.pos += 1;
                if let Some(n) = self.peek().filter(|n| n.kind == TokenKind::Ident) {
                    words.push(n.text.clone());
                    self.pos += 1;
                }
            } else if is_type_start(t, &self.ctx.decls.typedefs) {
                words.push(t.text.clone());
                self.pos += 1;
            } else {
                break;
            }
        }
        if words.is_empty() {
            self.pos = start;
            return None;
        }
        let mut pointer = 0;
        while self.eat_punct("*") {
            pointer += 1;
        }
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        Some(resolve_type(&refs, pointer, self.ctx.width))
    }

    fn sizeof_operand(&mut self) -> Option<SizeExpr> {
        let paren = self.eat_punct("(");
        if paren {
            if let Some(ty) = self.type_name() {
                if !self.eat_punct(")") {
                    return None;
                }
                return Some(self.sizeof_type(&ty));
            }
        }
        // sizeof expression: *p, p[0], x, or an unknown type name.
        let mut derefs = 0;
        while self.eat_punct("*") {
            derefs += 1;
        }
        let name_tok = self.peek().filter(|t| t.kind == TokenKind::Ident)?.clone();
        let at = self.base + self.pos;
        self.pos += 1;
        if self.eat_punct("[") {
            let _ = self.peek().filter(|t| t.kind == TokenKind::IntLiteral || t.kind == TokenKind::Ident)?;
            self.pos += 1;
            if !self.eat_punct("]") {
                return None;
            }
            derefs += 1;
        }
        if paren && !self.eat_punct(")") {
            return None;
        }
        let resolved = self.ctx.decls.lookup(&name_tok.text, at).cloned().and_then(|mut ty| {
            for _ in 0..derefs {
                ty = ty.pointee()?;
            }
            Some(ty)
        });
        Some(match resolved {
            Some(ty) => self.sizeof_type(&ty),
            None if derefs == 0 => {
                // Unknown typedef name.
                self.low_confidence = true;
                SizeExpr::SizeOf {
                    type_name: name_tok.text,
                    bytes: UNKNOWN_TYPE_BYTES,
                }
            }
            None => return None,
        })
    }

    fn sizeof_type(&mut self, ty: &CType) -> SizeExpr {
        if !ty.known && ty.pointer == 0 {
            self.low_confidence = true;
        }
        let stars = "*".repeat(ty.pointer as usize);
        let type_name = if stars.is_empty() {
            ty.name.clone()
        } else {
            format!("{} {stars}", ty.name)
        };
        SizeExpr::SizeOf {
            type_name,
            bytes: ty.bytes(),
        }
    }

    fn unary(&mut self) -> Option<SizeExpr> {
        let tok = self.peek()?.clone();
        if tok.is_keyword("sizeof") {
            self.pos += 1;
            return self.sizeof_operand();
        }
        if tok.is_punct("(") {
            self.pos += 1;
            let save = self.pos;
            if let Some(ty) = self.type_name() {
                if self.eat_punct(")") {
                    let inner = self.unary()?;
                    let it = ty.int_type()?;
                    return Some(SizeExpr::cast(it.width, it.signed, inner));
                }
            }
            self.pos = save;
            let e = self.sum()?;
            if !self.eat_punct(")") {
                return None;
            }
            return Some(e);
        }
        match tok.kind {
            TokenKind::IntLiteral => {
                self.pos += 1;
                Some(SizeExpr::constant(parse_int_literal(&tok.text)?))
            }
            TokenKind::Ident => {
                let at = self.base + self.pos;
                self.pos += 1;
                let mut name = tok.text.clone();
                // Member chains are treated as one opaque variable.
                while let Some(t) = self.peek() {
                    if (t.is_punct("->") || t.is_punct(".")) && self.toks.get(self.pos + 1).is_some_and(|n| n.kind == TokenKind::Ident) {
                        name.push_str(&t.text);
                        name.push_str(&self.toks[self.pos + 1].text);
                        self.pos += 2;
                    } else {
                        break;
                    }
                }
                if self.peek().is_some_and(|t| t.is_punct("(") || t.is_punct("[")) {
                    return None;
                }
                if name == tok.text {
                    if let Some(v) = self.ctx.defines.get(&name) {
                        return Some(SizeExpr::constant(*v));
                    }
                    if self.ctx.decls.lookup(&name, at).is_none() {
                        if let Some(v) = limit_constant(&name, self.ctx.width) {
                            return Some(SizeExpr::constant(u64::try_from(v).ok()?));
                        }
                        // Undeclared upper-case names are macros from headers
                        // whose value is unknown; treating them as attacker
                        // inputs would fabricate proofs.
                        if is_macro_like(&name) {
                            return None;
                        }
                    }
                }
                Some(SizeExpr::var(name))
            }
            _ => None,
        }
    }
}

pub(crate) fn is_macro_like(name: &str) -> bool {
    name.chars().any(|c| c.is_ascii_uppercase())
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Integer constant expression over literals, defines, limit macros,
/// `sizeof`, `+ - * /` and parentheses. Casts are skipped.
pub fn eval_const(tokens: &[Token], ctx: &ExprContext<'_>) -> Option<u128> {
    struct C<'t, 'c> {
        toks: &'t [Token],
        pos: usize,
        ctx: &'c ExprContext<'c>,
    }
    impl C<'_, '_> {
        fn is(&self, p: &str) -> bool {
            self.toks.get(self.pos).is_some_and(|t| t.is_punct(p))
        }
        fn sum(&mut self) -> Option<u128> {
            let mut v = self.product()?;
            loop {
                if self.is("+") {
                    self.pos += 1;
                    v = v.checked_add(self.product()?)?;
                } else if self.is("-") {
                    self.pos += 1;
                    v = v.checked_sub(self.product()?)?;
                } else {
                    return Some(v);
                }
            }
        }
        fn product(&mut self) -> Option<u128> {
            let mut v = self.atom()?;
            loop {
                if self.is("*") {
                    self.pos += 1;
                    v = v.checked_mul(self.atom()?)?;
                } else if self.is("/") {
                    self.pos += 1;
                    v = v.checked_div(self.atom()?)?;
                } else {
                    return Some(v);
                }
            }
        }
        fn atom(&mut self) -> Option<u128> {
            let t = self.toks.get(self.pos)?.clone();
            self.pos += 1;
            if t.is_keyword("sizeof") {
                let mut p = Parser {
                    toks: self.toks,
                    pos: self.pos,
                    base: 0,
                    ctx: self.ctx,
                    low_confidence: false,
                };
                let e = p.sizeof_operand()?;
                self.pos = p.pos;
                if p.low_confidence {
                    return None;
                }
                return e.eval_exact(&|_| None);
            }
            if t.is_punct("(") {
                let mut p = Parser {
                    toks: self.toks,
                    pos: self.pos,
                    base: 0,
                    ctx: self.ctx,
                    low_confidence: false,
                };
                if p.type_name().is_some() && p.eat_punct(")") {
                    self.pos = p.pos;
                    return self.atom();
                }
                let v = self.sum()?;
                if !self.is(")") {
                    return None;
                }
                self.pos += 1;
                return Some(v);
            }
            match t.kind {
                TokenKind::IntLiteral => parse_int_literal(&t.text).map(u128::from),
                TokenKind::Ident => self
                    .ctx
                    .defines
                    .get(&t.text)
                    .map(|v| u128::from(*v))
                    .or_else(|| limit_constant(&t.text, self.ctx.width)),
                _ => None,
            }
        }
    }
    let mut c = C { toks: tokens, pos: 0, ctx };
    let v = c.sum()?;
    (c.pos == tokens.len()).then_some(v)
}

/// Collects `#define NAME <constant expression>` from preprocessor tokens.
pub fn collect_defines(all_tokens: &[Token], width: u32) -> BTreeMap<String, u64> {
    let mut defines = BTreeMap::new();
    let empty = DeclTable::default();
    for t in all_tokens.iter().filter(|t| t.is_preprocessor()) {
        let body = t.text.trim_start_matches('#').trim_start();
        let Some(rest) = body.strip_prefix("define") else {
            continue;
        };
        let rest = rest.replace("\\\n", " ");
        let mut parts = rest.trim_start().splitn(2, |c: char| c.is_whitespace());
        let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
            continue;
        };
        if name.contains('(') {
            continue;
        }
        let toks: Vec<Token> = super::lexer::tokenize_c(value)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Other)
            .collect();
        let ctx = ExprContext {
            decls: &empty,
            defines: &defines,
            width,
        };
        if let Some(v) = eval_const(&toks, &ctx).and_then(|v| u64::try_from(v).ok()) {
            defines.insert(name.to_string(), v);
        }
    }
    defines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::lexer::tokenize_c;

    fn code(src: &str) -> Vec<Token> {
        tokenize_c(src)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Other)
            .collect()
    }

    fn parse_in(decl_src: &str, expr_src: &str) -> Option<ParsedExpr> {
        let decl_toks = code(decl_src);
        let decls = DeclTable::scan(&decl_toks, 32);
        let defines = collect_defines(&tokenize_c(decl_src), 32);
        let ctx = ExprContext {
            decls: &decls,
            defines: &defines,
            width: 32,
        };
        parse_size_expr(&code(expr_src), usize::MAX / 2, &ctx)
    }

    #[test]
    fn canonical_shape() {
        let p = parse_in("", "n * sizeof(int)").unwrap();
        assert_eq!(
            p.expr,
            SizeExpr::mul(
                SizeExpr::var("n"),
                SizeExpr::SizeOf {
                    type_name: "int".into(),
                    bytes: 4
                }
            )
        );
        assert_eq!(p.expr.normalized(), SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(4)));
        assert!(!p.low_confidence);
    }

    #[test]
    fn precedence_and_parens() {
        let p = parse_in("", "n * 2 + 1").unwrap().expr;
        assert_eq!(
            p,
            SizeExpr::add(SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(2)), SizeExpr::constant(1))
        );
        let p = parse_in("", "(a + b) * 8").unwrap().expr;
        assert_eq!(p.vars(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn sizeof_of_expressions() {
        let decl = "struct rec *r; int *p; double d;";
        assert_eq!(parse_in(decl, "n * sizeof(*p)").unwrap().expr.normalized(),
            SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(4)));
        assert_eq!(parse_in(decl, "n * sizeof p[0]").unwrap().expr.normalized(),
            SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(4)));
        assert_eq!(parse_in(decl, "sizeof(d) * n").unwrap().expr.normalized(),
            SizeExpr::mul(SizeExpr::constant(8), SizeExpr::var("n")));
        let s = parse_in(decl, "n * sizeof(*r)").unwrap();
        assert!(s.low_confidence);
        let s = parse_in(decl, "n * sizeof(struct rec)").unwrap();
        assert!(s.low_confidence);
        assert_eq!(s.expr.normalized(), SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(16)));
        assert!(parse_in("", "n * sizeof(char *)").unwrap().expr.normalized()
            == SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(8)));
    }

    #[test]
    fn casts_and_members() {
        let p = parse_in("", "(size_t)count * 4").unwrap().expr;
        assert_eq!(
            p,
            SizeExpr::mul(SizeExpr::cast(32, false, SizeExpr::var("count")), SizeExpr::constant(4))
        );
        let p = parse_in("", "hdr->count * sizeof(uint16_t)").unwrap().expr.normalized();
        assert_eq!(p, SizeExpr::mul(SizeExpr::var("hdr->count"), SizeExpr::constant(2)));
    }

    #[test]
    fn defines_and_limits() {
        let p = parse_in("#define ELEM 12\n", "n * ELEM").unwrap().expr;
        assert_eq!(p, SizeExpr::mul(SizeExpr::var("n"), SizeExpr::constant(12)));
        assert!(parse_in("", "n * UNKNOWN_MACRO").is_none());
        let d = collect_defines(&tokenize_c("#define A 4\n#define B (A * 1024)\n#define F(x) x\n"), 32);
        assert_eq!(d["B"], 4096);
        assert!(!d.contains_key("F(x)"));
    }

    #[test]
    fn unparseable() {
        assert!(parse_in("", "strlen(s) + 1").is_none());
        assert!(parse_in("", "n - 1").is_none());
        assert!(parse_in("", "n / 2").is_none());
        assert!(parse_in("", "a[i] * 4").is_none());
        assert!(parse_in("", "").is_none());
        assert!(parse_in("", "n *").is_none());
    }

    #[test]
    fn constant_evaluation() {
        let decls = DeclTable::default();
        let defines = BTreeMap::from([("MAXN".to_string(), 1000u64)]);
        let ctx = ExprContext { decls: &decls, defines: &defines, width: 32 };
        assert_eq!(eval_const(&code("SIZE_MAX / sizeof(int)"), &ctx), Some((1 << 30) - 1));
        assert_eq!(eval_const(&code("UINT_MAX / 4"), &ctx), Some((1 << 30) - 1));
        assert_eq!(eval_const(&code("MAXN * 2 - 1"), &ctx), Some(1999));
        assert_eq!(eval_const(&code("(size_t)64"), &ctx), Some(64));
        assert_eq!(eval_const(&code("n"), &ctx), None);
        let ctx64 = ExprContext { decls: &decls, defines: &defines, width: 64 };
        assert_eq!(eval_const(&code("SIZE_MAX / 8"), &ctx64), Some((1 << 61) - 1));
    }

    #[test]
    fn exact_evaluation_with_vars_set_to_one() {
        let e = parse_in("", "(n + 1) * sizeof(long)").unwrap().expr;
        assert_eq!(e.eval_exact(&|_| Some(1)), Some(16));
        let c = SizeExpr::cast(8, false, SizeExpr::constant(300));
        assert_eq!(c.eval_exact(&|_| None), Some(44));
    }
}
