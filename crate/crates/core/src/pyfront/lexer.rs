// SPDX-License-Identifier: Apache-2.0

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PyTok {
    Name(String),
    Num(String),
    /// A string literal. `body` is the text between the quotes, unescaped
    /// only as far as quote handling requires.
    Str { prefix: String, body: String },
    Op(String),
}

impl PyTok {
    pub fn is_op(&self, op: &str) -> bool {
        matches!(self, PyTok::Op(o) if o == op)
    }

    pub fn is_name(&self, name: &str) -> bool {
        matches!(self, PyTok::Name(n) if n == name)
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            PyTok::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_fstring(&self) -> bool {
        matches!(self, PyTok::Str { prefix, .. } if prefix.contains(['f', 'F']))
    }
}

/// One logical line of Python.
#[derive(Debug, Clone)]
pub struct Stmt {
    pub line: u32,
    pub indent: usize,
    /// Source text, comments included, trimmed.
    pub text: String,
    pub toks: Vec<PyTok>,
}

impl Stmt {
    pub fn starts_with_keyword(&self, kw: &str) -> bool {
        self.toks.first().is_some_and(|t| t.is_name(kw))
    }
}

const OPS3: &[&str] = &["**=", "//=", ">>=", "<<=", "...", "!=="];
const OPS2: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "->",
    ":=", "<<", ">>",
];

fn string_prefix_len(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i;
    while j < chars.len() && j - i < 2 && "rRbBuUfF".contains(chars[j]) {
        j += 1;
    }
    (j < chars.len() && (chars[j] == '\'' || chars[j] == '"')).then_some(j - i)
}

/// Splits source into logical statements: physical lines joined inside
/// brackets, triple-quoted strings and after backslashes. Also splits on
/// top-level `;`. Never fails.
pub fn statements(source: &str) -> Vec<Stmt> {
    let chars: Vec<char> = source.chars().collect();
    // Byte offset of each char, for slicing the original text.
    let mut offsets = Vec::with_capacity(chars.len() + 1);
    let mut acc = 0;
    for c in &chars {
        offsets.push(acc);
        acc += c.len_utf8();
    }
    offsets.push(acc);

    let mut out = Vec::new();
    let mut toks = Vec::new();
    let mut depth = 0i32;
    let mut line = 1u32;
    let mut stmt_line = 1u32;
    let mut stmt_start: Option<usize> = None;
    let mut line_start = 0usize;
    let mut indent = 0usize;
    let mut after_semi = false;
    // End of the last token, so trailing comments stay out of the text.
    let mut tok_end = 0usize;
    let mut last_len = 0usize;
    let mut i = 0;

    let flush = |out: &mut Vec<Stmt>, toks: &mut Vec<PyTok>, start: Option<usize>, end: usize, line: u32, indent: usize| {
        if let Some(s) = start {
            if !toks.is_empty() {
                out.push(Stmt {
                    line,
                    indent,
                    text: source[offsets[s]..offsets[end]].trim().to_string(),
                    toks: std::mem::take(toks),
                });
            }
        }
        toks.clear();
    };

    while i < chars.len() {
        if toks.len() != last_len {
            tok_end = i;
            last_len = toks.len();
        }
        let c = chars[i];
        if c == '\n' {
            if depth <= 0 {
                flush(&mut out, &mut toks, stmt_start, tok_end, stmt_line, indent);
                last_len = 0;
                stmt_start = None;
                depth = 0;
            }
            after_semi = false;
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c == '\\' && chars.get(i + 1) == Some(&'\n') {
            line += 1;
            i += 2;
            continue;
        }
        if c == ' ' || c == '\t' || c == '\r' || c == '\x0c' {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if stmt_start.is_none() {
            stmt_start = Some(i);
            stmt_line = line;
            if !after_semi {
                indent = chars[line_start..i].iter().map(|c| if *c == '\t' { 8 } else { 1 }).sum();
            }
        }
        if c == ';' && depth <= 0 {
            flush(&mut out, &mut toks, stmt_start, tok_end, stmt_line, indent);
            last_len = 0;
            stmt_start = None;
            after_semi = true;
            i += 1;
            continue;
        }
        if let Some(plen) = (c.is_alphabetic() || c == '\'' || c == '"').then(|| string_prefix_len(&chars, i)).flatten() {
            let prefix: String = chars[i..i + plen].iter().collect();
            let q = chars[i + plen];
            let triple = chars.get(i + plen + 1) == Some(&q) && chars.get(i + plen + 2) == Some(&q);
            let raw = prefix.contains(['r', 'R']);
            let mut j = i + plen + if triple { 3 } else { 1 };
            let body_start = j;
            let body_end;
            loop {
                if j >= chars.len() {
                    body_end = j;
                    break;
                }
                let d = chars[j];
                if d == '\\' && !raw {
                    if chars.get(j + 1) == Some(&'\n') {
                        line += 1;
                    }
                    j += 2;
                    continue;
                }
                if d == '\n' {
                    if !triple {
                        body_end = j;
                        break;
                    }
                    line += 1;
                }
                if d == q && (!triple || (chars.get(j + 1) == Some(&q) && chars.get(j + 2) == Some(&q))) {
                    body_end = j;
                    j += if triple { 3 } else { 1 };
                    break;
                }
                j += 1;
            }
            let body: String = chars[body_start..body_end.min(chars.len())].iter().collect();
            toks.push(PyTok::Str { prefix, body });
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(PyTok::Name(chars[s..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let s = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                i += 1;
            }
            toks.push(PyTok::Num(chars[s..i].iter().collect()));
            continue;
        }
        let rest: String = chars[i..(i + 3).min(chars.len())].iter().collect();
        let op = OPS3
            .iter()
            .chain(OPS2)
            .find(|op| rest.starts_with(**op))
            .map(|s| s.to_string())
            .unwrap_or_else(|| c.to_string());
        match op.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        i += op.chars().count();
        toks.push(PyTok::Op(op));
    }
    if toks.len() != last_len {
        tok_end = chars.len();
    }
    flush(&mut out, &mut toks, stmt_start, tok_end, stmt_line, indent);
    out
}
