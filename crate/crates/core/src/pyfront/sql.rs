// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::lexer::{statements, PyTok};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SqlPart {
    Lit(String),
    /// An interpolated value; holds the source expression.
    Slot(String),
}

/// A SQL string as the program assembles it: literal text and slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlTemplate {
    pub parts: Vec<SqlPart>,
}

impl SqlTemplate {
    /// Renders the query with `fill(slot_index, expr)` for each slot.
    pub fn render(&self, mut fill: impl FnMut(usize, &str) -> String) -> String {
        let mut out = String::new();
        let mut k = 0;
        for p in &self.parts {
            match p {
                SqlPart::Lit(s) => out.push_str(s),
                SqlPart::Slot(e) => {
                    out.push_str(&fill(k, e));
                    k += 1;
                }
            }
        }
        out
    }

    /// Literal text immediately before the first slot.
    pub fn text_before_first_slot(&self) -> Option<String> {
        let first = self.parts.iter().position(|p| matches!(p, SqlPart::Slot(_)))?;
        let mut before = String::new();
        for p in &self.parts[..first] {
            if let SqlPart::Lit(s) = p {
                before.push_str(s);
            }
        }
        Some(before)
    }
}

fn tok_text(t: &PyTok) -> String {
    match t {
        PyTok::Name(s) | PyTok::Num(s) | PyTok::Op(s) => s.clone(),
        PyTok::Str { prefix, body } => format!("{prefix}'{body}'"),
    }
}

/// Splits `{expr}` interpolations out of f-string or `.format` text.
fn brace_parts(body: &str, out: &mut Vec<SqlPart>) {
    let mut lit = String::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if (c == '{' || c == '}') && chars.get(i + 1) == Some(&c) {
            lit.push(c);
            i += 2;
            continue;
        }
        if c == '{' {
            let mut depth = 1;
            let mut j = i + 1;
            while j < chars.len() && depth > 0 {
                match chars[j] {
                    '{' => depth += 1,
                    '}' => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            let inner: String = chars[i + 1..j.saturating_sub(1).max(i + 1)].iter().collect();
            let expr = inner.split(['!', ':']).next().unwrap_or("").trim().to_string();
            if !lit.is_empty() {
                out.push(SqlPart::Lit(std::mem::take(&mut lit)));
            }
            out.push(SqlPart::Slot(expr));
            i = j;
            continue;
        }
        lit.push(c);
        i += 1;
    }
    if !lit.is_empty() {
        out.push(SqlPart::Lit(lit));
    }
}

/// Splits `%s`, `%d`, `%(name)s` conversions out of printf-style text.
fn percent_parts(body: &str, out: &mut Vec<SqlPart>) {
    let mut lit = String::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '%' {
            lit.push(chars[i]);
            i += 1;
            continue;
        }
        if chars.get(i + 1) == Some(&'%') {
            lit.push('%');
            i += 2;
            continue;
        }
        let mut j = i + 1;
        let mut name = String::new();
        if chars.get(j) == Some(&'(') {
            j += 1;
            while j < chars.len() && chars[j] != ')' {
                name.push(chars[j]);
                j += 1;
            }
            j += 1;
        }
        while j < chars.len() && !chars[j].is_ascii_alphabetic() {
            j += 1;
        }
        if j < chars.len() {
            if !lit.is_empty() {
                out.push(SqlPart::Lit(std::mem::take(&mut lit)));
            }
            out.push(SqlPart::Slot(if name.is_empty() { "%".to_string() + &chars[j].to_string() } else { name }));
            i = j + 1;
        } else {
            lit.extend(&chars[i..]);
            break;
        }
    }
    if !lit.is_empty() {
        out.push(SqlPart::Lit(lit));
    }
}

fn operand_parts(toks: &[PyTok], out: &mut Vec<SqlPart>) {
    let mut toks = toks;
    // Strip parentheses around the whole operand.
    while toks.len() >= 2 && toks[0].is_op("(") && toks[toks.len() - 1].is_op(")") {
        toks = &toks[1..toks.len() - 1];
    }
    let n_str = toks.iter().take_while(|t| matches!(t, PyTok::Str { .. })).count();
    if n_str == 0 {
        let text: Vec<String> = toks.iter().map(tok_text).collect();
        out.push(SqlPart::Slot(text.join("")));
        return;
    }
    let rest = &toks[n_str..];
    let percent = rest.first().is_some_and(|t| t.is_op("%"));
    let format = rest.first().is_some_and(|t| t.is_op(".")) && rest.get(1).is_some_and(|t| t.is_name("format"));
    for t in &toks[..n_str] {
        let PyTok::Str { body, .. } = t else { unreachable!() };
        if t.is_fstring() || format {
            brace_parts(body, out);
        } else if percent {
            percent_parts(body, out);
        } else {
            out.push(SqlPart::Lit(body.clone()));
        }
    }
}

/// Reconstructs the SQL template from a building statement: the value of
/// an assignment or the first argument of an `execute` call.
pub fn sql_template(statement: &str) -> Option<SqlTemplate> {
    let st = statements(statement).into_iter().next()?;
    let toks = &st.toks;
    let range = {
        let exec = toks.windows(2).position(|w| {
            matches!(&w[0], PyTok::Name(n) if n == "execute" || n == "executemany") && w[1].is_op("(")
        });
        match exec {
            Some(at) => {
                let start = at + 2;
                let mut depth = 0;
                let mut end = toks.len();
                for (j, t) in toks.iter().enumerate().skip(start) {
                    match t {
                        PyTok::Op(o) if o == "(" || o == "[" || o == "{" => depth += 1,
                        PyTok::Op(o) if (o == ")" || o == "," ) && depth == 0 => {
                            end = j;
                            break;
                        }
                        PyTok::Op(o) if o == ")" || o == "]" || o == "}" => depth -= 1,
                        _ => {}
                    }
                }
                (start, end)
            }
            None => {
                let eq = toks.iter().position(|t| t.is_op("=") || t.is_op("+="))?;
                (eq + 1, toks.len())
            }
        }
    };
    let value = &toks[range.0..range.1];
    let mut parts = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (j, t) in value.iter().enumerate() {
        match t {
            PyTok::Op(o) if o == "(" || o == "[" || o == "{" => depth += 1,
            PyTok::Op(o) if o == ")" || o == "]" || o == "}" => depth -= 1,
            PyTok::Op(o) if o == "+" && depth == 0 => {
                operand_parts(&value[start..j], &mut parts);
                start = j + 1;
            }
            _ => {}
        }
    }
    operand_parts(&value[start..], &mut parts);

    // Merge adjacent literals.
    let mut merged: Vec<SqlPart> = Vec::new();
    for p in parts {
        match (merged.last_mut(), p) {
            (Some(SqlPart::Lit(a)), SqlPart::Lit(b)) => a.push_str(&b),
            (_, p) => merged.push(p),
        }
    }
    let has_slot = merged.iter().any(|p| matches!(p, SqlPart::Slot(_)));
    has_slot.then_some(SqlTemplate { parts: merged })
}
