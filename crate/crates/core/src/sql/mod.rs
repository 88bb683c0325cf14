//! Tokenizer, parser, placement validation and canonical rendering for the
//! extended SQL dialect.

pub mod ast;
mod parser;
mod placement;
mod render;
mod token;

pub use parser::{parse, parse_expression, parse_statement, parse_tokens};
pub use placement::{validate_placement, Clause, SemanticToken, Violation};
pub use render::{render, render_expr};
pub use token::{tokenize, Keyword, Token, TokenKind};
