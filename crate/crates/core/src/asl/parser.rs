// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Accessor, AslAst, BinOp, Builtin, CaseArm, Expr, Stmt, StmtKind};
use super::lexer::{tokenize, Tok, Token};
use super::AslError;

/// Maximum nesting of `if`/`case` statements (bounds path-condition length).
pub const MAX_PATH_DEPTH: usize = 8;
/// Maximum nesting of if-expressions (one nested level).
pub const MAX_IFEXPR_DEPTH: usize = 2;

const KEYWORDS: &[&str] = &[
    "if",
    "then",
    "else",
    "elsif",
    "case",
    "of",
    "when",
    "otherwise",
    "UNDEFINED",
    "UNPREDICTABLE",
    "DIV",
];

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    symbols: BTreeMap<String, u32>,
    next_id: usize,
    depth: usize,
    ifexpr_depth: usize,
    /// Variables definitely assigned on every path reaching the cursor;
    /// `None` once the cursor is unreachable.
    defined: Option<BTreeSet<String>>,
}

impl Parser {
    pub(crate) fn new(
        text: &str,
        symbols: BTreeMap<String, u32>,
        predefined: BTreeSet<String>,
    ) -> Result<Self, AslError> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
            symbols,
            next_id: 0,
            depth: 0,
            ifexpr_depth: 0,
            defined: Some(predefined),
        })
    }

    /// Parses the whole program and returns it with the variables that are
    /// definitely assigned at its end (`None` if the end is unreachable).
    pub(crate) fn parse_program(mut self) -> Result<(AslAst, Option<BTreeSet<String>>), AslError> {
        if self.toks.is_empty() {
            return Ok((AslAst::default(), self.defined));
        }
        let statements = self.parse_block(0)?;
        if let Some(t) = self.peek() {
            return Err(self.err_at(t, "unexpected token"));
        }
        Ok((AslAst { statements }, self.defined))
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, t: &Token, msg: &str) -> AslError {
        AslError::Syntax {
            line: t.line,
            col: t.col,
            msg: format!("{msg} ({})", describe(&t.tok)),
        }
    }

    fn err_eof(&self, msg: &str) -> AslError {
        let (line, col) = self.toks.last().map(|t| (t.line, t.col)).unwrap_or((1, 1));
        AslError::Syntax {
            line,
            col,
            msg: format!("{msg} (end of input)"),
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Token, AslError> {
        match self.next() {
            Some(t) if t.is_punct(p) => Ok(t),
            Some(t) => Err(self.err_at(&t, &format!("expected `{p}`"))),
            None => Err(self.err_eof(&format!("expected `{p}`"))),
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<Token, AslError> {
        match self.next() {
            Some(t) if t.is_word(w) => Ok(t),
            Some(t) => Err(self.err_at(&t, &format!("expected `{w}`"))),
            None => Err(self.err_eof(&format!("expected `{w}`"))),
        }
    }

    fn at_line_start(&self) -> bool {
        match self.pos {
            0 => true,
            p if p >= self.toks.len() => false,
            p => self.toks[p - 1].line != self.toks[p].line,
        }
    }

    fn line_indent(&self, pos: usize) -> usize {
        let line = self.toks[pos].line;
        let mut p = pos;
        while p > 0 && self.toks[p - 1].line == line {
            p -= 1;
        }
        self.toks[p].col
    }

    fn same_line(&self, line: usize) -> bool {
        self.peek().is_some_and(|t| t.line == line)
    }

    fn peek_is_word(&self, w: &str) -> bool {
        self.peek().is_some_and(|t| t.is_word(w))
    }

    fn peek_is_block_keyword(&self) -> bool {
        ["else", "elsif", "when", "otherwise"]
            .iter()
            .any(|w| self.peek_is_word(w))
    }

    fn fresh_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// A block is the run of lines sharing the indentation of its first
    /// line, which must be deeper than `parent_indent`.
    fn parse_block(&mut self, parent_indent: usize) -> Result<Vec<Stmt>, AslError> {
        let Some(first) = self.peek().cloned() else {
            return Err(self.err_eof("expected statement block"));
        };
        if !self.at_line_start() {
            return Err(self.err_at(&first, "block must start on a new line"));
        }
        let indent = self.line_indent(self.pos);
        if indent <= parent_indent {
            return Err(self.err_at(&first, "expected indented block"));
        }
        let mut stmts = Vec::new();
        while self.peek().is_some() && self.at_line_start() && self.line_indent(self.pos) == indent
        {
            if self.peek_is_block_keyword() {
                break;
            }
            let line = self.peek().unwrap().line;
            loop {
                stmts.push(self.parse_stmt(indent)?);
                if !self.same_line(line) || self.at_line_start() || self.peek_is_block_keyword() {
                    break;
                }
            }
            if self.same_line(line) && !self.at_line_start() {
                let t = self.peek().unwrap().clone();
                return Err(self.err_at(&t, "unexpected token after statement"));
            }
        }
        if let Some(t) = self.peek() {
            if self.at_line_start() && self.line_indent(self.pos) > indent {
                return Err(self.err_at(t, "unexpected indentation"));
            }
        }
        Ok(stmts)
    }

    /// Statements on the remainder of the current line, stopping at
    /// `else`/`elsif`.
    fn parse_inline(&mut self, line: usize, indent: usize) -> Result<Vec<Stmt>, AslError> {
        let mut stmts = Vec::new();
        while self.same_line(line) && !self.at_line_start() && !self.peek_is_block_keyword() {
            stmts.push(self.parse_stmt(indent)?);
        }
        if stmts.is_empty() {
            return match self.peek() {
                Some(t) => Err(self.err_at(t, "expected statement")),
                None => Err(self.err_eof("expected statement")),
            };
        }
        Ok(stmts)
    }

    fn parse_stmt(&mut self, indent: usize) -> Result<Stmt, AslError> {
        let Some(t) = self.peek().cloned() else {
            return Err(self.err_eof("expected statement"));
        };
        match &t.tok {
            Tok::Ident(w) if w == "if" => {
                self.next();
                self.parse_if_tail(t, indent)
            }
            Tok::Ident(w) if w == "case" => self.parse_case(indent),
            Tok::Ident(w) if w == "UNDEFINED" || w == "UNPREDICTABLE" => {
                self.next();
                self.expect_punct(";")?;
                let id = self.fresh_id();
                self.defined = None;
                let kind = if w == "UNDEFINED" {
                    StmtKind::Undefined
                } else {
                    StmtKind::Unpredictable
                };
                Ok(Stmt {
                    id,
                    line: t.line,
                    kind,
                })
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let id = self.fresh_id();
                self.next();
                if let Some(acc) = Accessor::from_name(name) {
                    if self.peek().is_some_and(|n| n.is_punct("[")) {
                        self.next();
                        let args = self.parse_args("]", acc.arity(), acc.name(), &t)?;
                        self.expect_punct("=")?;
                        let rhs = self.parse_expr()?;
                        self.expect_punct(";")?;
                        return Ok(Stmt {
                            id,
                            line: t.line,
                            kind: StmtKind::Store {
                                target: acc,
                                args,
                                rhs,
                            },
                        });
                    }
                }
                if self.symbols.contains_key(name) {
                    return Err(AslError::Validation {
                        line: t.line,
                        msg: format!("cannot assign to encoding symbol `{name}`"),
                    });
                }
                if Builtin::from_name(name).is_some() || Accessor::from_name(name).is_some() {
                    return Err(self.err_at(&t, "cannot assign to a builtin"));
                }
                self.expect_punct("=")?;
                let rhs = self.parse_expr()?;
                self.expect_punct(";")?;
                if let Some(d) = self.defined.as_mut() {
                    d.insert(name.clone());
                }
                Ok(Stmt {
                    id,
                    line: t.line,
                    kind: StmtKind::Assign {
                        var: name.clone(),
                        rhs,
                    },
                })
            }
            _ => Err(self.err_at(&t, "expected statement")),
        }
    }

    fn enter_nesting(&mut self, t: &Token) -> Result<(), AslError> {
        self.depth += 1;
        if self.depth > MAX_PATH_DEPTH {
            return Err(AslError::Validation {
                line: t.line,
                msg: format!("conditional nesting exceeds depth {MAX_PATH_DEPTH}"),
            });
        }
        Ok(())
    }

    /// Parses after the `if`/`elsif` keyword.
    fn parse_if_tail(&mut self, kw: Token, indent: usize) -> Result<Stmt, AslError> {
        self.enter_nesting(&kw)?;
        let id = self.fresh_id();
        let cond = self.parse_expr()?;
        let then_tok = self.expect_word("then")?;
        let before = self.defined.clone();

        let inline = self.same_line(then_tok.line);
        let then_body = if inline {
            self.parse_inline(then_tok.line, indent)?
        } else {
            self.parse_block(indent)?
        };
        let after_then = std::mem::replace(&mut self.defined, before.clone());

        let mut else_body = None;
        let else_here = if inline {
            self.same_line(then_tok.line) && self.peek_is_block_keyword()
        } else {
            false
        };
        let else_next_line = !else_here
            && self.peek().is_some()
            && self.at_line_start()
            && self.line_indent(self.pos) == indent
            && (self.peek_is_word("else") || self.peek_is_word("elsif"));
        if else_here || else_next_line {
            let t = self.next().unwrap();
            if t.is_word("elsif") {
                else_body = Some(vec![self.parse_if_tail(t, indent)?]);
            } else if t.is_word("else") {
                if self.same_line(t.line) {
                    else_body = Some(self.parse_inline(t.line, indent)?);
                } else {
                    else_body = Some(self.parse_block(indent)?);
                }
            } else {
                return Err(self.err_at(&t, "expected `else`"));
            }
        }
        let after_else = self.defined.take();
        self.defined = merge(after_then, after_else);
        self.depth -= 1;
        Ok(Stmt {
            id,
            line: kw.line,
            kind: StmtKind::If {
                cond,
                then_body,
                else_body,
            },
        })
    }

    fn parse_case(&mut self, indent: usize) -> Result<Stmt, AslError> {
        let kw = self.expect_word("case")?;
        self.enter_nesting(&kw)?;
        let id = self.fresh_id();
        let scrutinee = self.parse_expr()?;
        let of = self.expect_word("of")?;
        if self.same_line(of.line) {
            let t = self.peek().unwrap().clone();
            return Err(self.err_at(&t, "case arms must start on a new line"));
        }
        let before = self.defined.clone();
        let Some(first) = self.peek().cloned() else {
            return Err(self.err_eof("expected `when`"));
        };
        let arm_indent = self.line_indent(self.pos);
        if arm_indent <= indent {
            return Err(self.err_at(&first, "expected indented `when` arms"));
        }
        let mut arms = Vec::new();
        let mut otherwise = None;
        // The unmatched path falls out of the case as UNDEFINED unless an
        // `otherwise` arm exists.
        let mut merged: Option<BTreeSet<String>> = None;
        while self.peek().is_some()
            && self.at_line_start()
            && self.line_indent(self.pos) == arm_indent
            && otherwise.is_none()
        {
            let t = self.next().unwrap();
            self.defined = before.clone();
            if t.is_word("when") {
                let pattern = match self.next() {
                    Some(Token {
                        tok: Tok::Bits(b), ..
                    }) => b,
                    Some(other) => return Err(self.err_at(&other, "expected bit-string pattern")),
                    None => return Err(self.err_eof("expected bit-string pattern")),
                };
                if self.peek().is_some_and(|n| n.is_punct(",")) {
                    let n = self.peek().unwrap().clone();
                    return Err(self.err_at(&n, "multi-value case arms are not supported"));
                }
                let body = if self.same_line(t.line) {
                    self.parse_inline(t.line, arm_indent)?
                } else {
                    self.parse_block(arm_indent)?
                };
                arms.push(CaseArm { pattern, body });
            } else if t.is_word("otherwise") {
                let body = if self.same_line(t.line) {
                    self.parse_inline(t.line, arm_indent)?
                } else {
                    self.parse_block(arm_indent)?
                };
                otherwise = Some(body);
            } else {
                return Err(self.err_at(&t, "expected `when` or `otherwise`"));
            }
            merged = merge(merged, self.defined.take());
        }
        if arms.is_empty() {
            return Err(AslError::Validation {
                line: kw.line,
                msg: "case statement without `when` arms".into(),
            });
        }
        self.defined = merged;
        self.depth -= 1;
        Ok(Stmt {
            id,
            line: kw.line,
            kind: StmtKind::Case {
                scrutinee,
                arms,
                otherwise,
            },
        })
    }

    fn parse_args(
        &mut self,
        close: &str,
        arity: usize,
        name: &str,
        at: &Token,
    ) -> Result<Vec<Expr>, AslError> {
        let mut args = Vec::new();
        if !self.peek().is_some_and(|t| t.is_punct(close)) {
            loop {
                args.push(self.parse_expr()?);
                if self.peek().is_some_and(|t| t.is_punct(",")) {
                    self.next();
                    continue;
                }
                break;
            }
        }
        self.expect_punct(close)?;
        if args.len() != arity {
            return Err(AslError::Syntax {
                line: at.line,
                col: at.col,
                msg: format!(
                    "`{name}` expects {arity} argument{}, got {}",
                    if arity == 1 { "" } else { "s" },
                    args.len()
                ),
            });
        }
        Ok(args)
    }

    fn parse_expr(&mut self) -> Result<Expr, AslError> {
        if self.peek_is_word("if") {
            let kw = self.next().unwrap();
            self.ifexpr_depth += 1;
            if self.ifexpr_depth > MAX_IFEXPR_DEPTH {
                return Err(AslError::Validation {
                    line: kw.line,
                    msg: format!("if-expression nesting deeper than {MAX_IFEXPR_DEPTH} levels"),
                });
            }
            let c = self.parse_expr()?;
            self.expect_word("then")?;
            let t = self.parse_expr()?;
            self.expect_word("else")?;
            let e = self.parse_expr()?;
            self.ifexpr_depth -= 1;
            return Ok(Expr::IfExpr(Box::new(c), Box::new(t), Box::new(e)));
        }
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<Expr, AslError> {
        let mut lhs = self.parse_and()?;
        while self.peek().is_some_and(|t| t.is_punct("||")) {
            self.next();
            let rhs = self.parse_and()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, AslError> {
        let mut lhs = self.parse_cmp()?;
        while self.peek().is_some_and(|t| t.is_punct("&&")) {
            self.next();
            let rhs = self.parse_cmp()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_cmp(&mut self) -> Result<Expr, AslError> {
        let lhs = self.parse_add()?;
        let op = match self.peek().map(|t| &t.tok) {
            Some(Tok::Punct("==")) => BinOp::Eq,
            Some(Tok::Punct("!=")) => BinOp::Ne,
            Some(Tok::Punct("<")) => BinOp::Lt,
            Some(Tok::Punct(">")) => BinOp::Gt,
            Some(Tok::Punct("<=")) => BinOp::Le,
            Some(Tok::Punct(">=")) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.parse_add()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn parse_add(&mut self) -> Result<Expr, AslError> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Punct("+")) => BinOp::Add,
                Some(Tok::Punct("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.parse_mul()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_mul(&mut self) -> Result<Expr, AslError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Punct("*")) => BinOp::Mul,
                Some(Tok::Punct("<<")) => BinOp::Shl,
                Some(Tok::Ident(w)) if w == "DIV" => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.parse_unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, AslError> {
        if self.peek().is_some_and(|t| t.is_punct("!")) {
            self.next();
            return Ok(Expr::Not(Box::new(self.parse_unary()?)));
        }
        if self.peek().is_some_and(|t| t.is_punct("-")) {
            self.next();
            let inner = self.parse_unary()?;
            return Ok(Expr::binary(BinOp::Sub, Expr::Int(0), inner));
        }
        self.parse_concat()
    }

    fn parse_concat(&mut self) -> Result<Expr, AslError> {
        let mut lhs = self.parse_primary()?;
        while self.peek().is_some_and(|t| t.is_punct(":")) {
            self.next();
            let rhs = self.parse_primary()?;
            lhs = Expr::Concat(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_primary(&mut self) -> Result<Expr, AslError> {
        let Some(t) = self.next() else {
            return Err(self.err_eof("expected expression"));
        };
        match &t.tok {
            Tok::Int(i) => Ok(Expr::Int(*i)),
            Tok::Bits(b) => Ok(Expr::Bits(*b)),
            Tok::Punct("(") => {
                let e = self.parse_expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let next_is = |p: &str| self.peek().is_some_and(|n| n.is_punct(p));
                if let Some(b) = Builtin::from_name(name) {
                    if next_is("(") {
                        self.next();
                        let args = self.parse_args(")", b.arity(), b.name(), &t)?;
                        return Ok(Expr::Call(b, args));
                    }
                }
                if let Some(a) = Accessor::from_name(name) {
                    if next_is("[") {
                        self.next();
                        let args = self.parse_args("]", a.arity(), a.name(), &t)?;
                        return Ok(Expr::Access(a, args));
                    }
                }
                if self.symbols.contains_key(name) {
                    return Ok(Expr::Symbol(name.clone()));
                }
                match &self.defined {
                    Some(d) if !d.contains(name) => Err(AslError::UnknownIdentifier {
                        name: name.clone(),
                        line: t.line,
                        col: t.col,
                    }),
                    _ => Ok(Expr::Var(name.clone())),
                }
            }
            _ => Err(self.err_at(&t, "expected expression")),
        }
    }
}

fn merge(a: Option<BTreeSet<String>>, b: Option<BTreeSet<String>>) -> Option<BTreeSet<String>> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(a.intersection(&b).cloned().collect()),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("found `{s}`"),
        Tok::Int(i) => format!("found `{i}`"),
        Tok::Bits(b) => format!("found '{b}'"),
        Tok::Punct(p) => format!("found `{p}`"),
    }
}
