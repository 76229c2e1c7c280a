// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenKind {
    Ident,
    IntLiteral,
    Punct,
    Keyword,
    String,
    Char,
    /// Comments, preprocessor lines, floats and anything unrecognized.
    Other,
}

/// A lexeme with its position. `start..end` are byte offsets into the
/// source; `line` and `col` are 1-based, `col` counting characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punct, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }

    pub fn is_ident(&self, text: &str) -> bool {
        self.is(TokenKind::Ident, text)
    }

    pub fn is_preprocessor(&self) -> bool {
        self.kind == TokenKind::Other && self.text.starts_with('#')
    }
}

pub(crate) const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Alignas",
    "_Alignof", "_Atomic", "_Generic", "_Noreturn", "_Static_assert", "_Thread_local",
];

// Longest first within each leading character.
const PUNCTUATORS: &[&str] = &[
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "*=", "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##", "[", "]", "(", ")", "{", "}", ".",
    "&", "*", "+", "-", "~", "!", "/", "%", "<", ">", "^", "|", "?", ":", ";", "=", ",", "#",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn bump_while(&mut self, mut pred: impl FnMut(char) -> bool) {
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.bump();
        }
    }
}

/// Splits C source into tokens. Never fails: malformed input degrades to
/// `Other` tokens. Whitespace is not tokenized but the byte spans let the
/// original text be rebuilt exactly.
pub fn tokenize_c(source: &str) -> Vec<Token> {
    let mut cur = Cursor {
        src: source,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();
    let mut line_has_token = false;

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            if c == '\n' {
                line_has_token = false;
            }
            cur.bump();
            continue;
        }
        let (start, line, col) = (cur.pos, cur.line, cur.col);
        let kind = if c == '#' && !line_has_token {
            // Preprocessor directive, honouring backslash continuations.
            loop {
                cur.bump_while(|c| c != '\n' && c != '\\');
                match cur.peek() {
                    Some('\\') => {
                        cur.bump();
                        if cur.peek() == Some('\n') {
                            cur.bump();
                        }
                    }
                    _ => break,
                }
            }
            TokenKind::Other
        } else if c == '/' && cur.peek_at(1) == Some('/') {
            cur.bump_while(|c| c != '\n');
            TokenKind::Other
        } else if c == '/' && cur.peek_at(1) == Some('*') {
            cur.bump();
            cur.bump();
            loop {
                match cur.bump() {
                    None => break,
                    Some('*') if cur.peek() == Some('/') => {
                        cur.bump();
                        break;
                    }
                    Some(_) => {}
                }
            }
            TokenKind::Other
        } else if c == '"' || c == '\'' {
            lex_quoted(&mut cur, c)
        } else if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            lex_number(&mut cur)
        } else if c.is_ascii_alphabetic() || c == '_' {
            cur.bump_while(|c| c.is_ascii_alphanumeric() || c == '_');
            if KEYWORDS.contains(&&source[start..cur.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if let Some(p) = PUNCTUATORS.iter().find(|p| cur.rest().starts_with(**p)) {
            for _ in 0..p.len() {
                cur.bump();
            }
            TokenKind::Punct
        } else {
            cur.bump();
            TokenKind::Other
        };
        line_has_token = true;
        // A multi-line comment or directive ends on a later line.
        if source[start..cur.pos].ends_with('\n') {
            line_has_token = false;
        }
        tokens.push(Token {
            kind,
            text: source[start..cur.pos].to_string(),
            line,
            col,
            start,
            end: cur.pos,
        });
    }
    tokens
}

fn lex_quoted(cur: &mut Cursor<'_>, quote: char) -> TokenKind {
    cur.bump();
    loop {
        match cur.peek() {
            None | Some('\n') => return TokenKind::Other,
            Some('\\') => {
                cur.bump();
                if cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            }
            Some(c) if c == quote => {
                cur.bump();
                return if quote == '"' {
                    TokenKind::String
                } else {
                    TokenKind::Char
                };
            }
            Some(_) => {
                cur.bump();
            }
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> TokenKind {
    let start = cur.pos;
    let mut prev = '\0';
    while let Some(c) = cur.peek() {
        let exponent_sign = (c == '+' || c == '-') && matches!(prev, 'e' | 'E' | 'p' | 'P');
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exponent_sign {
            prev = c;
            cur.bump();
        } else {
            break;
        }
    }
    if parse_int_literal(&cur.src[start..cur.pos]).is_some() {
        TokenKind::IntLiteral
    } else {
        TokenKind::Other
    }
}

/// Value of a C integer literal (decimal, octal, hex or binary, with any
/// `u`/`l` suffix combination).
pub fn parse_int_literal(text: &str) -> Option<u64> {
    let body = text.trim_end_matches(['u', 'U', 'l', 'L']);
    if body.is_empty() || body.len() + 3 < text.len() {
        return None;
    }
    let (digits, radix) = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        (h, 16)
    } else if let Some(b) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        (b, 2)
    } else if body.len() > 1 && body.starts_with('0') {
        (&body[1..], 8)
    } else {
        (body, 10)
    };
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, radix).ok()
}
