// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::lexer::{Token, TokenKind};

/// Stand-in byte size for types the table does not know (structs,
/// unknown typedefs). Sites depending on it are marked low-confidence.
pub const UNKNOWN_TYPE_BYTES: u64 = 16;

/// A fixed-width integer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntType {
    pub width: u32,
    pub signed: bool,
}

/// What the frontend knows about a declared type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CType {
    pub name: String,
    pub pointer: u32,
    /// Size of the base type, before any pointer declarator.
    pub base_bytes: u64,
    pub known: bool,
    /// `Some` for integer base types.
    pub int: Option<IntType>,
}

impl CType {
    pub fn bytes(&self) -> u64 {
        if self.pointer > 0 {
            8
        } else {
            self.base_bytes
        }
    }

    /// Integer type of the value itself, `None` for pointers and non-integers.
    pub fn int_type(&self) -> Option<IntType> {
        if self.pointer > 0 {
            None
        } else {
            self.int
        }
    }

    pub fn pointee(&self) -> Option<CType> {
        (self.pointer > 0).then(|| CType {
            pointer: self.pointer - 1,
            ..self.clone()
        })
    }

    pub fn is_signed_int(&self) -> bool {
        self.int_type().is_some_and(|t| t.signed)
    }

    pub fn is_unsigned_int(&self) -> bool {
        self.int_type().is_some_and(|t| !t.signed)
    }
}

const SPECIFIER_KEYWORDS: &[&str] = &[
    "char", "short", "int", "long", "signed", "unsigned", "float", "double", "void", "_Bool",
];

const QUALIFIERS: &[&str] = &[
    "const", "volatile", "static", "register", "extern", "inline", "restrict", "auto",
    "_Atomic", "_Thread_local",
];

const TYPEDEF_NAMES: &[&str] = &[
    "size_t", "ssize_t", "ptrdiff_t", "off_t", "intptr_t", "uintptr_t", "bool", "FILE",
    "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "wchar_t", "socklen_t", "time_t", "pid_t", "mode_t", "u8", "u16", "u32", "u64", "i8",
    "i16", "i32", "i64",
];

pub(crate) fn is_type_start(tok: &Token, typedefs: &BTreeSet<String>) -> bool {
    match tok.kind {
        TokenKind::Keyword => {
            SPECIFIER_KEYWORDS.contains(&tok.text.as_str())
                || QUALIFIERS.contains(&tok.text.as_str())
                || matches!(tok.text.as_str(), "struct" | "union" | "enum")
        }
        TokenKind::Ident => {
            TYPEDEF_NAMES.contains(&tok.text.as_str()) || typedefs.contains(&tok.text)
        }
        _ => false,
    }
}

/// Resolves a type name (specifier words, optionally followed by `*`s).
pub fn resolve_type(words: &[&str], pointer: u32, width: u32) -> CType {
    let words: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !QUALIFIERS.contains(w))
        .collect();
    let name = words.join(" ");
    let int = |bits: u32, signed: bool| (u64::from(bits / 8), true, Some(IntType { width: bits, signed }));

    let (base_bytes, known, int_ty) = match words.as_slice() {
        ["struct" | "union", ..] => (UNKNOWN_TYPE_BYTES, false, None),
        ["enum", ..] => int(32, true),
        [single] => match *single {
            "char" => int(8, true),
            "short" | "i16" | "int16_t" => int(16, true),
            "int" | "signed" | "i32" | "int32_t" => int(32, true),
            "long" | "i64" | "int64_t" | "off_t" | "time_t" => int(64, true),
            "unsigned" | "u32" | "uint32_t" | "mode_t" | "socklen_t" => int(32, false),
            "int8_t" | "i8" => int(8, true),
            "uint8_t" | "u8" | "_Bool" | "bool" => int(8, false),
            "uint16_t" | "u16" => int(16, false),
            "uint64_t" | "u64" => int(64, false),
            "wchar_t" | "pid_t" => int(32, true),
            "size_t" | "uintptr_t" => int(width, false),
            "ssize_t" | "ptrdiff_t" | "intptr_t" => int(width, true),
            "float" => (4, true, None),
            "double" => (8, true, None),
            "void" => (1, true, None),
            _ => (UNKNOWN_TYPE_BYTES, false, None),
        },
        _ => {
            let unsigned = words.contains(&"unsigned");
            let longs = words.iter().filter(|w| **w == "long").count();
            if words.contains(&"double") {
                (if longs > 0 { 16 } else { 8 }, true, None)
            } else if words.contains(&"char") {
                int(8, !unsigned)
            } else if words.contains(&"short") {
                int(16, !unsigned)
            } else if longs > 0 {
                int(64, !unsigned)
            } else if words
                .iter()
                .all(|w| matches!(*w, "int" | "unsigned" | "signed"))
            {
                int(32, !unsigned)
            } else {
                (UNKNOWN_TYPE_BYTES, false, None)
            }
        }
    };
    CType {
        name,
        pointer,
        base_bytes,
        known,
        int: int_ty,
    }
}

/// A declared identifier and where it was declared.
#[derive(Debug, Clone)]
pub struct Decl {
    /// Index of the declared identifier in the token stream.
    pub pos: usize,
    pub ty: CType,
}

/// Declarations found by a flat scan: `TYPE *name` followed by one of
/// `; , = [ )`. Function declarators are skipped.
#[derive(Debug, Clone, Default)]
pub struct DeclTable {
    by_name: BTreeMap<String, Vec<Decl>>,
    positions: BTreeSet<usize>,
    pub typedefs: BTreeSet<String>,
}

impl DeclTable {
    pub fn scan(tokens: &[Token], width: u32) -> DeclTable {
        let mut table = DeclTable::default();
        // typedef ... NAME ;
        for (i, t) in tokens.iter().enumerate() {
            if t.is_keyword("typedef") {
                let mut j = i + 1;
                let mut depth = 0i32;
                while j < tokens.len() {
                    let tj = &tokens[j];
                    if tj.is_punct("{") {
                        depth += 1;
                    } else if tj.is_punct("}") {
                        depth -= 1;
                    } else if tj.is_punct(";") && depth == 0 {
                        if j > 0 && tokens[j - 1].kind == TokenKind::Ident {
                            table.typedefs.insert(tokens[j - 1].text.clone());
                        }
                        break;
                    }
                    j += 1;
                }
            }
        }

        let mut i = 0;
        while i < tokens.len() {
            let prev_ok = i == 0
                || tokens[i - 1].is_punct(";")
                || tokens[i - 1].is_punct("{")
                || tokens[i - 1].is_punct("}")
                || tokens[i - 1].is_punct("(")
                || tokens[i - 1].is_punct(",")
                || tokens[i - 1].is_punct(")");
            if !prev_ok || !is_type_start(&tokens[i], &table.typedefs) {
                i += 1;
                continue;
            }
            let start = i;
            let mut words: Vec<&str> = Vec::new();
            while i < tokens.len() {
                let t = &tokens[i];
                if t.is_keyword("struct") || t.is_keyword("union") || t.is_keyword("enum") {
                    words.push(&t.text);
                    if tokens.get(i + 1).is_some_and(|n| n.kind == TokenKind::Ident) {
                        words.push(&tokens[i + 1].text);
                        i += 1;
                    }
                    i += 1;
                } else if is_type_start(t, &table.typedefs) {
                    words.push(&t.text);
                    i += 1;
                } else {
                    break;
                }
            }
            // One or more comma-separated declarators share the specifiers.
            loop {
                let mut pointer = 0;
                while tokens.get(i).is_some_and(|t| t.is_punct("*")) {
                    pointer += 1;
                    i += 1;
                    while tokens
                        .get(i)
                        .is_some_and(|t| t.is_keyword("const") || t.is_keyword("restrict"))
                    {
                        i += 1;
                    }
                }
                let Some(name) = tokens.get(i).filter(|t| t.kind == TokenKind::Ident) else {
                    break;
                };
                let next = tokens.get(i + 1);
                let is_var = next.is_none_or(|n| {
                    [";", ",", "=", "[", ")"].iter().any(|p| n.is_punct(p))
                });
                if !is_var {
                    break;
                }
                table.positions.insert(i);
                table
                    .by_name
                    .entry(name.text.clone())
                    .or_default()
                    .push(Decl {
                        pos: i,
                        ty: resolve_type(&words, pointer, width),
                    });
                // Skip to the next top-level comma of this declaration.
                let mut depth = 0i32;
                let mut j = i + 1;
                let mut more = false;
                while j < tokens.len() {
                    let t = &tokens[j];
                    if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                        depth += 1;
                    } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                        if depth == 0 {
                            break;
                        }
                        depth -= 1;
                    } else if t.is_punct(";") && depth == 0 {
                        break;
                    } else if t.is_punct(",") && depth == 0 {
                        more = true;
                        break;
                    }
                    j += 1;
                }
                // Parameter lists separate declarations with commas too,
                // but each parameter repeats its specifiers.
                let in_params = start > 0 && (tokens[start - 1].is_punct("(") || tokens[start - 1].is_punct(","));
                if more && !in_params {
                    i = j + 1;
                } else {
                    i = j;
                    break;
                }
            }
            i = i.max(start + 1);
        }
        table
    }

    /// The latest declaration of `name` at or before token index `pos`.
    pub fn lookup(&self, name: &str, pos: usize) -> Option<&CType> {
        let decls = self.by_name.get(name)?;
        decls
            .iter()
            .rev()
            .find(|d| d.pos <= pos)
            .or_else(|| decls.first())
            .map(|d| &d.ty)
    }

    /// Whether the token at `pos` is the identifier of a declarator.
    pub fn is_declarator(&self, pos: usize) -> bool {
        self.positions.contains(&pos)
    }
}
