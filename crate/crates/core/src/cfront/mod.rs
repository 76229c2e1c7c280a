// SPDX-License-Identifier: Apache-2.0

//! C frontend: a lossless tokenizer, a size-expression parser and the
//! candidate-site detectors. Not a C parser; scopes come from brace depth.

mod expr;
mod lexer;
mod sites;
mod types;

pub use expr::{eval_const, parse_size_expr, ExprContext, ParsedExpr, SizeExpr};
pub use lexer::{parse_int_literal, tokenize_c, Token, TokenKind};
pub use sites::{extract_c_sites, CandidateSite, SiteKind};
pub use types::{resolve_type, CType, DeclTable, IntType, UNKNOWN_TYPE_BYTES};

/// Tokenizes and scans `source` in one step.
pub fn scan_c(artifact_id: &str, source: &str, width: u32) -> Vec<CandidateSite> {
    extract_c_sites(artifact_id, source, &tokenize_c(source), width)
}
