// SPDX-License-Identifier: Apache-2.0

//! The pseudocode subset used by decode and execute blocks: parsing,
//! concrete evaluation, constraint extraction, slicing and symbolization.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

mod ast;
pub mod eval;
mod lexer;
mod parser;
pub mod slice;
pub mod symbolic;

pub use ast::{Accessor, AslAst, BinOp, Builtin, CaseArm, Expr, Stmt, StmtKind};
pub use eval::{eval_decode, DecodeOutcome, DecodeTag};
pub use parser::{MAX_IFEXPR_DEPTH, MAX_PATH_DEPTH};
pub use slice::backward_slice;
pub use symbolic::{extract_constraints, symbolize, Constraint, Polarity, SymExpr};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AslError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("invalid pseudocode at line {line}: {msg}")]
    Validation { line: usize, msg: String },
}

/// Parses a block against the given encoding symbols (name to bit width).
pub fn parse_asl(text: &str, symbols: &BTreeMap<String, u32>) -> Result<AslAst, AslError> {
    parse_asl_with_env(text, symbols, &BTreeSet::new()).map(|(ast, _)| ast)
}

/// Like [`parse_asl`], with `predefined` variables treated as already
/// assigned. Also returns the variables definitely assigned at the end of
/// the block, or `None` if every path ends in UNDEFINED/UNPREDICTABLE.
pub fn parse_asl_with_env(
    text: &str,
    symbols: &BTreeMap<String, u32>,
    predefined: &BTreeSet<String>,
) -> Result<(AslAst, Option<BTreeSet<String>>), AslError> {
    parser::Parser::new(text, symbols.clone(), predefined.clone())?.parse_program()
}
