// SPDX-License-Identifier: Apache-2.0

//! Symbolic expressions over encoding symbols, constraint extraction and
//! symbolization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

use super::ast::{AslAst, BinOp, Builtin, Expr, Stmt, StmtKind};
use super::eval::{floor_div, shl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Shl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    fn from_binop(op: BinOp) -> Option<Self> {
        Some(match op {
            BinOp::Eq => Self::Eq,
            BinOp::Ne => Self::Ne,
            BinOp::Lt => Self::Lt,
            BinOp::Gt => Self::Gt,
            BinOp::Le => Self::Le,
            BinOp::Ge => Self::Ge,
            _ => return None,
        })
    }

    pub fn apply(self, x: i128, y: i128) -> bool {
        match self {
            Self::Eq => x == y,
            Self::Ne => x != y,
            Self::Lt => x < y,
            Self::Gt => x > y,
            Self::Le => x <= y,
            Self::Ge => x >= y,
        }
    }

    pub fn negate(self) -> Self {
        match self {
            Self::Eq => Self::Ne,
            Self::Ne => Self::Eq,
            Self::Lt => Self::Ge,
            Self::Gt => Self::Le,
            Self::Le => Self::Gt,
            Self::Ge => Self::Lt,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::Eq => "==",
            Self::Ne => "!=",
            Self::Lt => "<",
            Self::Gt => ">",
            Self::Le => "<=",
            Self::Ge => ">=",
        }
    }
}

/// An expression over free symbols. Before symbolization it may still hold
/// program variables (`Var`) and runtime-state reads (`Opaque`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymExpr {
    Const(i128),
    Bool(bool),
    Sym { name: String, width: u32 },
    Var(String),
    Opaque(String),
    Arith(ArithOp, Box<SymExpr>, Box<SymExpr>),
    Cmp(CmpOp, Box<SymExpr>, Box<SymExpr>),
    And(Box<SymExpr>, Box<SymExpr>),
    Or(Box<SymExpr>, Box<SymExpr>),
    Not(Box<SymExpr>),
    Ite(Box<SymExpr>, Box<SymExpr>, Box<SymExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymValue {
    Int(i128),
    Bool(bool),
}

impl SymExpr {
    pub fn sym(name: impl Into<String>, width: u32) -> Self {
        SymExpr::Sym {
            name: name.into(),
            width,
        }
    }

    pub fn arith(op: ArithOp, a: SymExpr, b: SymExpr) -> Self {
        match (op, &a, &b) {
            (_, SymExpr::Const(x), SymExpr::Const(y)) => {
                if let Some(SymValue::Int(v)) = apply_arith(op, *x, *y) {
                    return SymExpr::Const(v);
                }
            }
            (ArithOp::Add, SymExpr::Const(0), _) => return b,
            (ArithOp::Add | ArithOp::Sub, _, SymExpr::Const(0)) => return a,
            (ArithOp::Mul, SymExpr::Const(1), _) => return b,
            (ArithOp::Mul | ArithOp::Div, _, SymExpr::Const(1)) => return a,
            _ => {}
        }
        SymExpr::Arith(op, Box::new(a), Box::new(b))
    }

    pub fn cmp(op: CmpOp, a: SymExpr, b: SymExpr) -> Self {
        if let (SymExpr::Const(x), SymExpr::Const(y)) = (&a, &b) {
            return SymExpr::Bool(op.apply(*x, *y));
        }
        SymExpr::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: SymExpr, b: SymExpr) -> Self {
        match (&a, &b) {
            (SymExpr::Bool(true), _) => b,
            (_, SymExpr::Bool(true)) => a,
            (SymExpr::Bool(false), _) | (_, SymExpr::Bool(false)) => SymExpr::Bool(false),
            _ => SymExpr::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(a: SymExpr, b: SymExpr) -> Self {
        match (&a, &b) {
            (SymExpr::Bool(false), _) => b,
            (_, SymExpr::Bool(false)) => a,
            (SymExpr::Bool(true), _) | (_, SymExpr::Bool(true)) => SymExpr::Bool(true),
            _ => SymExpr::Or(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: SymExpr) -> Self {
        match a {
            SymExpr::Bool(b) => SymExpr::Bool(!b),
            SymExpr::Not(inner) => *inner,
            other => SymExpr::Not(Box::new(other)),
        }
    }

    pub fn ite(c: SymExpr, t: SymExpr, e: SymExpr) -> Self {
        match c {
            SymExpr::Bool(true) => t,
            SymExpr::Bool(false) => e,
            _ if t == e => t,
            c => SymExpr::Ite(Box::new(c), Box::new(t), Box::new(e)),
        }
    }

    pub fn conj(items: impl IntoIterator<Item = SymExpr>) -> Self {
        items.into_iter().fold(SymExpr::Bool(true), SymExpr::and)
    }

    fn children(&self) -> Vec<&SymExpr> {
        match self {
            SymExpr::Const(_)
            | SymExpr::Bool(_)
            | SymExpr::Sym { .. }
            | SymExpr::Var(_)
            | SymExpr::Opaque(_) => Vec::new(),
            SymExpr::Arith(_, a, b)
            | SymExpr::Cmp(_, a, b)
            | SymExpr::And(a, b)
            | SymExpr::Or(a, b) => vec![a, b],
            SymExpr::Not(a) => vec![a],
            SymExpr::Ite(c, t, e) => vec![c, t, e],
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a SymExpr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Free symbols with their widths, sorted by name.
    pub fn symbols(&self) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        self.visit(&mut |e| {
            if let SymExpr::Sym { name, width } = e {
                out.insert(name.clone(), *width);
            }
        });
        out
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let SymExpr::Var(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn has_opaque(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, SymExpr::Opaque(_)));
        found
    }

    /// Evaluates under a symbol assignment. `None` when a symbol is
    /// unbound, on division by zero or overflow, or on a sort mismatch.
    pub fn eval(&self, a: &BTreeMap<String, i128>) -> Option<SymValue> {
        let int = |e: &SymExpr| match e.eval(a)? {
            SymValue::Int(i) => Some(i),
            SymValue::Bool(_) => None,
        };
        let boolean = |e: &SymExpr| match e.eval(a)? {
            SymValue::Bool(b) => Some(b),
            SymValue::Int(_) => None,
        };
        match self {
            SymExpr::Const(c) => Some(SymValue::Int(*c)),
            SymExpr::Bool(b) => Some(SymValue::Bool(*b)),
            SymExpr::Sym { name, .. } => a.get(name).copied().map(SymValue::Int),
            SymExpr::Var(_) | SymExpr::Opaque(_) => None,
            SymExpr::Arith(op, x, y) => apply_arith(*op, int(x)?, int(y)?),
            SymExpr::Cmp(op, x, y) => match (x.eval(a)?, y.eval(a)?) {
                (SymValue::Int(x), SymValue::Int(y)) => Some(SymValue::Bool(op.apply(x, y))),
                (SymValue::Bool(x), SymValue::Bool(y)) => match op {
                    CmpOp::Eq => Some(SymValue::Bool(x == y)),
                    CmpOp::Ne => Some(SymValue::Bool(x != y)),
                    _ => None,
                },
                _ => None,
            },
            SymExpr::And(x, y) => Some(SymValue::Bool(boolean(x)? && boolean(y)?)),
            SymExpr::Or(x, y) => Some(SymValue::Bool(boolean(x)? || boolean(y)?)),
            SymExpr::Not(x) => Some(SymValue::Bool(!boolean(x)?)),
            SymExpr::Ite(c, t, e) => {
                if boolean(c)? {
                    t.eval(a)
                } else {
                    e.eval(a)
                }
            }
        }
    }

    /// True when the expression evaluates to boolean true.
    pub fn holds(&self, a: &BTreeMap<String, i128>) -> bool {
        self.eval(a) == Some(SymValue::Bool(true))
    }
}

fn apply_arith(op: ArithOp, x: i128, y: i128) -> Option<SymValue> {
    let v = match op {
        ArithOp::Add => x.checked_add(y)?,
        ArithOp::Sub => x.checked_sub(y)?,
        ArithOp::Mul => x.checked_mul(y)?,
        ArithOp::Div => {
            if y == 0 {
                return None;
            }
            floor_div(x, y)
        }
        ArithOp::Shl => shl(x, y)?,
    };
    Some(SymValue::Int(v))
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(c) => write!(f, "{c}"),
            SymExpr::Bool(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" }),
            SymExpr::Sym { name, .. } | SymExpr::Var(name) => write!(f, "{name}"),
            SymExpr::Opaque(s) => write!(f, "<{s}>"),
            SymExpr::Arith(op, a, b) => {
                let s = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "DIV",
                    ArithOp::Shl => "<<",
                };
                write!(f, "({a} {s} {b})")
            }
            SymExpr::Cmp(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            SymExpr::And(a, b) => write!(f, "({a} && {b})"),
            SymExpr::Or(a, b) => write!(f, "({a} || {b})"),
            SymExpr::Not(a) => write!(f, "!{a}"),
            SymExpr::Ite(c, t, e) => write!(f, "(if {c} then {t} else {e})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Assert,
    Negate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintOrigin {
    /// Guard of an `if` statement.
    IfGuard,
    /// Condition of an if-expression.
    IfExprGuard,
    /// Pattern equality of one `case` arm.
    CaseArm,
    /// Comparison inside a compound guard or an assigned expression.
    Comparison,
}

/// A variable assigned a constant in every arm of a `case`, kept as a free
/// symbol whose value is tied to the arm that induces it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AuxSymbol {
    pub name: String,
    pub width: u32,
    pub scrutinee: SymExpr,
    pub arms: Vec<(Bits, i128)>,
}

impl AuxSymbol {
    /// The value this symbol takes under an encoding-symbol assignment.
    pub fn value_under(&self, a: &BTreeMap<String, i128>) -> Option<i128> {
        let SymValue::Int(v) = self.scrutinee.eval(a)? else {
            return None;
        };
        self.arms
            .iter()
            .find(|(p, _)| p.value() as i128 == v)
            .map(|(_, val)| *val)
    }

    /// `name == v1 || name == v2 || ...`
    pub fn domain_constraint(&self) -> SymExpr {
        let me = SymExpr::sym(&self.name, self.width);
        let mut values: Vec<i128> = self.arms.iter().map(|(_, v)| *v).collect();
        values.dedup();
        values
            .into_iter()
            .map(|v| SymExpr::cmp(CmpOp::Eq, me.clone(), SymExpr::Const(v)))
            .fold(SymExpr::Bool(false), SymExpr::or)
    }
}

/// One branch condition with its polarity and enclosing path.
///
/// `source` and `path_source` keep the pseudocode form; `expr` and
/// `path_condition` hold the symbolic form, rewritten to encoding symbols
/// once [`symbolize`] has run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub expr: SymExpr,
    pub polarity: Polarity,
    pub path_condition: Vec<SymExpr>,
    pub side: Vec<SymExpr>,
    pub aux: Vec<AuxSymbol>,
    pub site: usize,
    pub origin: ConstraintOrigin,
    pub source: Expr,
    pub path_source: Vec<Expr>,
    pub symbolized: bool,
}

impl Constraint {
    pub fn with_polarity(&self, polarity: Polarity) -> Self {
        Self {
            polarity,
            ..self.clone()
        }
    }

    /// The guard under this constraint's polarity.
    pub fn polar_expr(&self) -> SymExpr {
        match self.polarity {
            Polarity::Assert => self.expr.clone(),
            Polarity::Negate => SymExpr::not(self.expr.clone()),
        }
    }

    /// Polar guard conjoined with the path condition and side constraints.
    pub fn formula(&self) -> SymExpr {
        SymExpr::conj(
            std::iter::once(self.polar_expr())
                .chain(self.path_condition.iter().cloned())
                .chain(self.side.iter().cloned()),
        )
    }

    pub fn symbols(&self) -> BTreeMap<String, u32> {
        self.formula().symbols()
    }

    /// Extends an encoding-symbol assignment with the auxiliary symbols'
    /// induced values. `None` if some auxiliary symbol has no matching arm.
    pub fn with_aux(&self, a: &BTreeMap<String, i128>) -> Option<BTreeMap<String, i128>> {
        let mut full = a.clone();
        for aux in &self.aux {
            full.insert(aux.name.clone(), aux.value_under(a)?);
        }
        Some(full)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.polarity {
            Polarity::Assert => write!(f, "{}", self.expr)?,
            Polarity::Negate => write!(f, "!{}", self.expr)?,
        }
        for p in &self.path_condition {
            write!(f, " | {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymbolizeError {
    #[error("variable `{0}` has no reaching definition")]
    Unresolved(String),
    #[error("constraint depends on runtime state: {0}")]
    RuntimeDependent(String),
    #[error("cannot determine the width of `{0}` for concatenation")]
    UnknownWidth(String),
}

/// Extracts every branch condition of `ast`, each in both polarities.
///
/// Sources are the guard of every `if` and if-expression, the pattern
/// equality of every `case` arm, and each comparison inside compound guards
/// or assigned expressions.
pub fn extract_constraints(ast: &AslAst) -> Vec<Constraint> {
    let mut items: Vec<(Expr, Vec<Expr>, usize, ConstraintOrigin)> = Vec::new();
    let mut path = Vec::new();
    walk(&ast.statements, &mut path, &mut items);
    let mut out = Vec::with_capacity(items.len() * 2);
    for (source, path_source, site, origin) in items {
        let expr = lift(&source, None).unwrap_or_else(|_| SymExpr::Opaque(source.to_string()));
        let path_condition = path_source
            .iter()
            .map(|p| lift(p, None).unwrap_or_else(|_| SymExpr::Opaque(p.to_string())))
            .collect();
        let c = Constraint {
            expr,
            polarity: Polarity::Assert,
            path_condition,
            side: Vec::new(),
            aux: Vec::new(),
            site,
            origin,
            source,
            path_source,
            symbolized: false,
        };
        out.push(c.with_polarity(Polarity::Negate));
        out.insert(out.len() - 1, c);
    }
    out
}

type Item = (Expr, Vec<Expr>, usize, ConstraintOrigin);

fn emit(items: &mut Vec<Item>, e: &Expr, path: &[Expr], site: usize, origin: ConstraintOrigin) {
    if items
        .iter()
        .any(|(s, p, id, _)| s == e && p.as_slice() == path && *id == site)
    {
        return;
    }
    items.push((e.clone(), path.to_vec(), site, origin));
}

fn scan(items: &mut Vec<Item>, e: &Expr, path: &[Expr], site: usize) {
    e.visit(&mut |sub| match sub {
        Expr::IfExpr(c, _, _) => emit(items, c, path, site, ConstraintOrigin::IfExprGuard),
        Expr::Binary(op, _, _) if op.is_comparison() => {
            emit(items, sub, path, site, ConstraintOrigin::Comparison)
        }
        _ => {}
    });
}

fn walk(stmts: &[Stmt], path: &mut Vec<Expr>, items: &mut Vec<Item>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { rhs, .. } => scan(items, rhs, path, s.id),
            StmtKind::Store { args, rhs, .. } => {
                for a in args {
                    scan(items, a, path, s.id);
                }
                scan(items, rhs, path, s.id);
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                emit(items, cond, path, s.id, ConstraintOrigin::IfGuard);
                scan(items, cond, path, s.id);
                path.push(cond.clone());
                walk(then_body, path, items);
                path.pop();
                if let Some(e) = else_body {
                    path.push(Expr::Not(Box::new(cond.clone())));
                    walk(e, path, items);
                    path.pop();
                }
            }
            StmtKind::Case {
                scrutinee,
                arms,
                otherwise,
            } => {
                scan(items, scrutinee, path, s.id);
                let mut none_matched: Option<Expr> = None;
                for arm in arms {
                    let eq = Expr::binary(BinOp::Eq, scrutinee.clone(), Expr::Bits(arm.pattern));
                    emit(items, &eq, path, s.id, ConstraintOrigin::CaseArm);
                    path.push(eq);
                    walk(&arm.body, path, items);
                    path.pop();
                    let ne = Expr::binary(BinOp::Ne, scrutinee.clone(), Expr::Bits(arm.pattern));
                    none_matched = Some(match none_matched {
                        None => ne,
                        Some(acc) => Expr::binary(BinOp::And, acc, ne),
                    });
                }
                if let (Some(o), Some(nm)) = (otherwise, none_matched) {
                    path.push(nm);
                    walk(o, path, items);
                    path.pop();
                }
            }
            StmtKind::Undefined | StmtKind::Unpredictable => {}
        }
    }
}

/// A symbolic value with its static bit width, when known.
#[derive(Clone, Debug)]
struct Term {
    expr: SymExpr,
    width: Option<u32>,
}

type SymEnv = BTreeMap<String, Term>;

/// Symbol widths for symbols that appear as [`Expr::Symbol`]; filled in by
/// the caller through [`SymbolTable`].
pub type SymbolTable = BTreeMap<String, u32>;

fn lift(e: &Expr, ctx: Option<(&SymEnv, &SymbolTable)>) -> Result<SymExpr, SymbolizeError> {
    lift_term(e, ctx).map(|t| t.expr)
}

fn lift_term(e: &Expr, ctx: Option<(&SymEnv, &SymbolTable)>) -> Result<Term, SymbolizeError> {
    let plain = |expr: SymExpr| Term { expr, width: None };
    Ok(match e {
        Expr::Symbol(s) => {
            let width = ctx.and_then(|(_, t)| t.get(s).copied());
            Term {
                expr: SymExpr::sym(s.clone(), width.unwrap_or(0)),
                width,
            }
        }
        Expr::Var(v) => match ctx {
            Some((env, _)) => env
                .get(v)
                .cloned()
                .ok_or_else(|| SymbolizeError::Unresolved(v.clone()))?,
            None => plain(SymExpr::Var(v.clone())),
        },
        Expr::Bits(b) => Term {
            expr: SymExpr::Const(b.value() as i128),
            width: Some(b.width()),
        },
        Expr::Int(i) => plain(SymExpr::Const(*i)),
        Expr::Concat(a, b) => {
            let a = lift_term(a, ctx)?;
            let b_term = lift_term(b, ctx)?;
            let wb = b_term
                .width
                .ok_or_else(|| SymbolizeError::UnknownWidth(b.to_string()))?;
            let width = a.width.map(|wa| wa + wb);
            let shifted = SymExpr::arith(ArithOp::Mul, a.expr, SymExpr::Const(1i128 << wb));
            Term {
                expr: SymExpr::arith(ArithOp::Add, shifted, b_term.expr),
                width,
            }
        }
        Expr::Call(b, args) => {
            let x = lift_term(&args[0], ctx)?;
            match b {
                Builtin::UInt => plain(x.expr),
                Builtin::SInt => {
                    let w = x
                        .width
                        .ok_or_else(|| SymbolizeError::UnknownWidth(args[0].to_string()))?;
                    plain(to_signed(x.expr, w))
                }
                Builtin::ZeroExtend | Builtin::SignExtend => {
                    let n = match &args[1] {
                        Expr::Int(n) => Some(*n as u32),
                        _ => None,
                    };
                    let expr = if *b == Builtin::SignExtend {
                        let w = x
                            .width
                            .ok_or_else(|| SymbolizeError::UnknownWidth(args[0].to_string()))?;
                        let n = n.ok_or_else(|| SymbolizeError::UnknownWidth(e.to_string()))?;
                        let neg = to_signed(x.expr, w);
                        // Reinterpret the signed value as an unsigned n-bit value.
                        SymExpr::ite(
                            SymExpr::cmp(CmpOp::Lt, neg.clone(), SymExpr::Const(0)),
                            SymExpr::arith(ArithOp::Add, neg.clone(), SymExpr::Const(1i128 << n)),
                            neg,
                        )
                    } else {
                        x.expr
                    };
                    Term { expr, width: n }
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let x = lift(a, ctx)?;
            let y = lift(b, ctx)?;
            plain(match op {
                BinOp::Add => SymExpr::arith(ArithOp::Add, x, y),
                BinOp::Sub => SymExpr::arith(ArithOp::Sub, x, y),
                BinOp::Mul => SymExpr::arith(ArithOp::Mul, x, y),
                BinOp::Div => SymExpr::arith(ArithOp::Div, x, y),
                BinOp::Shl => SymExpr::arith(ArithOp::Shl, x, y),
                BinOp::And => SymExpr::and(x, y),
                BinOp::Or => SymExpr::or(x, y),
                cmp => SymExpr::cmp(CmpOp::from_binop(*cmp).expect("comparison"), x, y),
            })
        }
        Expr::Not(a) => plain(SymExpr::not(lift(a, ctx)?)),
        Expr::IfExpr(c, t, f) => {
            let c = lift(c, ctx)?;
            let t = lift_term(t, ctx)?;
            let f = lift_term(f, ctx)?;
            let width = if t.width == f.width { t.width } else { None };
            Term {
                expr: SymExpr::ite(c, t.expr, f.expr),
                width,
            }
        }
        Expr::Access(..) => plain(SymExpr::Opaque(e.to_string())),
    })
}

fn to_signed(x: SymExpr, w: u32) -> SymExpr {
    let half = 1i128 << (w - 1);
    SymExpr::ite(
        SymExpr::cmp(CmpOp::Ge, x.clone(), SymExpr::Const(half)),
        SymExpr::arith(ArithOp::Sub, x.clone(), SymExpr::Const(1i128 << w)),
        x,
    )
}

struct Symbolizer<'a> {
    symbols: &'a SymbolTable,
    site: usize,
    aux: Vec<AuxSymbol>,
}

impl Symbolizer<'_> {
    /// Runs `stmts` forward; `None` when every path through them ends in
    /// UNDEFINED/UNPREDICTABLE.
    fn block(&mut self, stmts: &[Stmt], mut env: SymEnv) -> Option<SymEnv> {
        for s in stmts {
            if s.id >= self.site {
                break;
            }
            env = self.stmt(s, env)?;
        }
        Some(env)
    }

    fn stmt(&mut self, s: &Stmt, mut env: SymEnv) -> Option<SymEnv> {
        match &s.kind {
            StmtKind::Assign { var, rhs } => {
                let term = lift_term(rhs, Some((&env, self.symbols))).unwrap_or_else(|err| Term {
                    expr: SymExpr::Opaque(err.to_string()),
                    width: None,
                });
                env.insert(var.clone(), term);
                Some(env)
            }
            StmtKind::Store { .. } => Some(env),
            StmtKind::Undefined | StmtKind::Unpredictable => None,
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = lift(cond, Some((&env, self.symbols)))
                    .unwrap_or_else(|err| SymExpr::Opaque(err.to_string()));
                let t = self.block(then_body, env.clone());
                let e = match else_body {
                    Some(e) => self.block(e, env.clone()),
                    None => Some(env.clone()),
                };
                match (t, e) {
                    (None, None) => None,
                    (Some(t), None) => Some(t),
                    (None, Some(e)) => Some(e),
                    (Some(t), Some(e)) => Some(merge_ite(&c, t, e)),
                }
            }
            StmtKind::Case {
                scrutinee,
                arms,
                otherwise,
            } => {
                let scr = lift(scrutinee, Some((&env, self.symbols)))
                    .unwrap_or_else(|err| SymExpr::Opaque(err.to_string()));
                let mut outs: Vec<(Option<Bits>, SymEnv)> = Vec::new();
                for arm in arms {
                    if let Some(out) = self.block(&arm.body, env.clone()) {
                        outs.push((Some(arm.pattern), out));
                    }
                }
                if let Some(o) = otherwise {
                    if let Some(out) = self.block(o, env.clone()) {
                        outs.push((None, out));
                    }
                }
                if outs.is_empty() {
                    return None;
                }
                let mut names: BTreeSet<&String> = BTreeSet::new();
                for (_, out) in &outs {
                    names.extend(out.keys());
                }
                let mut merged = env.clone();
                for name in names {
                    let vals: Option<Vec<Term>> =
                        outs.iter().map(|(_, o)| o.get(name).cloned()).collect();
                    let Some(vals) = vals else { continue };
                    if env
                        .get(name)
                        .is_some_and(|prev| vals.iter().all(|v| v.expr == prev.expr))
                    {
                        continue;
                    }
                    let consts: Option<Vec<i128>> = vals
                        .iter()
                        .map(|v| match v.expr {
                            SymExpr::Const(c) if c >= 0 => Some(c),
                            _ => None,
                        })
                        .collect();
                    let term = match consts {
                        Some(cs) if outs.iter().all(|(p, _)| p.is_some()) => {
                            let max = *cs.iter().max().unwrap();
                            let width = (128 - max.leading_zeros()).max(1);
                            let aux_name = self.fresh_aux_name(name);
                            let arms = outs
                                .iter()
                                .zip(&cs)
                                .map(|((p, _), v)| (p.unwrap(), *v))
                                .collect();
                            self.aux.push(AuxSymbol {
                                name: aux_name.clone(),
                                width,
                                scrutinee: scr.clone(),
                                arms,
                            });
                            Term {
                                expr: SymExpr::sym(aux_name, width),
                                width: None,
                            }
                        }
                        _ => {
                            // Chain of if-then-else; the last surviving arm
                            // doubles as the default.
                            let mut iter = outs.iter().zip(vals.iter()).rev();
                            let (_, last) = iter.next().unwrap();
                            let mut acc = last.expr.clone();
                            for ((p, _), v) in iter {
                                let p = p.expect("otherwise is always last");
                                acc = SymExpr::ite(
                                    SymExpr::cmp(
                                        CmpOp::Eq,
                                        scr.clone(),
                                        SymExpr::Const(p.value() as i128),
                                    ),
                                    v.expr.clone(),
                                    acc,
                                );
                            }
                            let width = vals[0]
                                .width
                                .filter(|w| vals.iter().all(|v| v.width == Some(*w)));
                            Term { expr: acc, width }
                        }
                    };
                    merged.insert(name.clone(), term);
                }
                Some(merged)
            }
        }
    }

    fn fresh_aux_name(&self, var: &str) -> String {
        if !self.aux.iter().any(|a| a.name == var) {
            return var.to_string();
        }
        (2..)
            .map(|i| format!("{var}#{i}"))
            .find(|n| !self.aux.iter().any(|a| &a.name == n))
            .unwrap()
    }
}

fn merge_ite(c: &SymExpr, t: SymEnv, e: SymEnv) -> SymEnv {
    let mut out = SymEnv::new();
    for (k, tv) in &t {
        match e.get(k) {
            Some(ev) => {
                let width = if tv.width == ev.width { tv.width } else { None };
                out.insert(
                    k.clone(),
                    Term {
                        expr: SymExpr::ite(c.clone(), tv.expr.clone(), ev.expr.clone()),
                        width,
                    },
                );
            }
            // Assigned on one side only: not definitely assigned afterwards,
            // but keep the value for uses guarded by the same condition.
            None => {
                out.insert(k.clone(), tv.clone());
            }
        }
    }
    for (k, ev) in e {
        out.entry(k).or_insert(ev);
    }
    out
}

/// Rewrites a constraint into encoding symbols (plus auxiliary case
/// symbols) by running the slice forward up to the constraint's site.
pub fn symbolize(
    slice: &AslAst,
    constraint: &Constraint,
    symbols: &SymbolTable,
) -> Result<Constraint, SymbolizeError> {
    let mut s = Symbolizer {
        symbols,
        site: constraint.site,
        aux: Vec::new(),
    };
    let env = s
        .block(&slice.statements, SymEnv::new())
        .unwrap_or_default();
    let ctx = Some((&env, symbols));
    let expr = lift(&constraint.source, ctx)?;
    let path_condition = constraint
        .path_source
        .iter()
        .map(|p| lift(p, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    for e in std::iter::once(&expr).chain(path_condition.iter()) {
        let mut bad = None;
        e.visit(&mut |x| match x {
            SymExpr::Opaque(o) if bad.is_none() => bad = Some(o.clone()),
            SymExpr::Var(v) if bad.is_none() => bad = Some(v.clone()),
            _ => {}
        });
        if let Some(b) = bad {
            return Err(if b.starts_with("variable `") {
                SymbolizeError::Unresolved(b)
            } else {
                SymbolizeError::RuntimeDependent(b)
            });
        }
    }
    let mut used = BTreeSet::new();
    for e in std::iter::once(&expr).chain(path_condition.iter()) {
        used.extend(e.symbols().into_keys());
    }
    let aux: Vec<AuxSymbol> = s
        .aux
        .into_iter()
        .filter(|a| used.contains(&a.name))
        .collect();
    let side = aux.iter().map(AuxSymbol::domain_constraint).collect();
    Ok(Constraint {
        expr,
        polarity: constraint.polarity,
        path_condition,
        side,
        aux,
        site: constraint.site,
        origin: constraint.origin,
        source: constraint.source.clone(),
        path_source: constraint.path_source.clone(),
        symbolized: true,
    })
}
