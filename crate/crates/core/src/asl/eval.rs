// SPDX-License-Identifier: Apache-2.0

//! Concrete interpreter for decode pseudocode.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

use super::ast::{AslAst, BinOp, Builtin, Expr, Stmt, StmtKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i128),
    Bits(Bits),
    Bool(bool),
}

impl Value {
    pub fn as_int(self) -> Result<i128, EvalError> {
        match self {
            Value::Int(i) => Ok(i),
            Value::Bits(b) => Ok(b.value() as i128),
            Value::Bool(_) => Err(EvalError::TypeMismatch(
                "expected integer, found boolean".into(),
            )),
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::TypeMismatch(format!(
                "expected boolean, found {other:?}"
            ))),
        }
    }

    fn binding(self) -> i128 {
        match self {
            Value::Int(i) => i,
            Value::Bits(b) => b.value() as i128,
            Value::Bool(b) => b as i128,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("encoding symbol `{0}` has no value")]
    MissingSymbol(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("arithmetic overflow")]
    Overflow,
    #[error("unsupported in decode evaluation: {0}")]
    Unsupported(String),
}

/// Result of running decode pseudocode on one symbol assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeOutcome {
    Ok(BTreeMap<String, i128>),
    Undefined,
    Unpredictable,
}

impl DecodeOutcome {
    pub fn tag(&self) -> DecodeTag {
        match self {
            DecodeOutcome::Ok(_) => DecodeTag::Ok,
            DecodeOutcome::Undefined => DecodeTag::Undefined,
            DecodeOutcome::Unpredictable => DecodeTag::Unpredictable,
        }
    }
}

/// The variant of a [`DecodeOutcome`], without bindings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DecodeTag {
    Ok,
    Undefined,
    Unpredictable,
}

impl DecodeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodeTag::Ok => "OK",
            DecodeTag::Undefined => "UNDEFINED",
            DecodeTag::Unpredictable => "UNPREDICTABLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "OK" => Some(DecodeTag::Ok),
            "UNDEFINED" => Some(DecodeTag::Undefined),
            "UNPREDICTABLE" => Some(DecodeTag::Unpredictable),
            _ => None,
        }
    }
}

impl fmt::Display for DecodeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Env = BTreeMap<String, Value>;

/// Where execution stopped when probing for a statement.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    /// The statement was reached; the environment holds the variables
    /// assigned before it.
    Reached(Env),
    /// Execution finished without reaching the statement.
    Exited(DecodeOutcome),
}

enum Flow {
    Continue,
    Exit(DecodeOutcome),
    Reached,
}

struct Interp<'a> {
    symbols: &'a BTreeMap<String, Bits>,
    env: Env,
    stop_at: Option<usize>,
}

/// Runs decode pseudocode under a full symbol assignment.
pub fn eval_decode(
    ast: &AslAst,
    assignment: &BTreeMap<String, Bits>,
) -> Result<DecodeOutcome, EvalError> {
    match probe(ast, assignment, None)? {
        Probe::Exited(o) => Ok(o),
        Probe::Reached(_) => unreachable!("no stop statement requested"),
    }
}

/// Runs until the statement with id `stop_at` is about to execute.
pub fn probe(
    ast: &AslAst,
    assignment: &BTreeMap<String, Bits>,
    stop_at: Option<usize>,
) -> Result<Probe, EvalError> {
    let mut it = Interp {
        symbols: assignment,
        env: Env::new(),
        stop_at,
    };
    match it.block(&ast.statements)? {
        Flow::Continue => {
            let bindings = it
                .env
                .iter()
                .map(|(k, v)| (k.clone(), v.binding()))
                .collect();
            Ok(Probe::Exited(DecodeOutcome::Ok(bindings)))
        }
        Flow::Exit(o) => Ok(Probe::Exited(o)),
        Flow::Reached => Ok(Probe::Reached(it.env)),
    }
}

impl Interp<'_> {
    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, EvalError> {
        for s in stmts {
            match self.stmt(s)? {
                Flow::Continue => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Continue)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, EvalError> {
        if self.stop_at == Some(s.id) {
            return Ok(Flow::Reached);
        }
        match &s.kind {
            StmtKind::Assign { var, rhs } => {
                let v = eval_expr(rhs, &self.env, self.symbols)?;
                self.env.insert(var.clone(), v);
                Ok(Flow::Continue)
            }
            StmtKind::Store { target, .. } => Err(EvalError::Unsupported(format!(
                "write to {}[...]",
                target.name()
            ))),
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                if eval_expr(cond, &self.env, self.symbols)?.as_bool()? {
                    self.block(then_body)
                } else if let Some(e) = else_body {
                    self.block(e)
                } else {
                    Ok(Flow::Continue)
                }
            }
            StmtKind::Case {
                scrutinee,
                arms,
                otherwise,
            } => {
                let v = eval_expr(scrutinee, &self.env, self.symbols)?.as_int()?;
                for arm in arms {
                    if arm.pattern.value() as i128 == v {
                        return self.block(&arm.body);
                    }
                }
                match otherwise {
                    Some(o) => self.block(o),
                    None => Ok(Flow::Exit(DecodeOutcome::Undefined)),
                }
            }
            StmtKind::Undefined => Ok(Flow::Exit(DecodeOutcome::Undefined)),
            StmtKind::Unpredictable => Ok(Flow::Exit(DecodeOutcome::Unpredictable)),
        }
    }
}

/// Evaluates one expression against variable and symbol bindings.
pub fn eval_expr(
    e: &Expr,
    env: &Env,
    symbols: &BTreeMap<String, Bits>,
) -> Result<Value, EvalError> {
    let ev = |x: &Expr| eval_expr(x, env, symbols);
    match e {
        Expr::Symbol(s) => symbols
            .get(s)
            .copied()
            .map(Value::Bits)
            .ok_or_else(|| EvalError::MissingSymbol(s.clone())),
        Expr::Var(v) => env
            .get(v)
            .copied()
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        Expr::Bits(b) => Ok(Value::Bits(*b)),
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Concat(a, b) => {
            let (Value::Bits(a), Value::Bits(b)) = (ev(a)?, ev(b)?) else {
                return Err(EvalError::TypeMismatch(
                    "concatenation needs bit strings".into(),
                ));
            };
            let width = a.width() + b.width();
            if width > 64 {
                return Err(EvalError::Overflow);
            }
            let value = (a.value() << b.width()) | b.value();
            Ok(Value::Bits(
                Bits::new(value, width).ok_or(EvalError::Overflow)?,
            ))
        }
        Expr::Call(b, args) => call(*b, args, env, symbols),
        Expr::Not(a) => Ok(Value::Bool(!ev(a)?.as_bool()?)),
        Expr::IfExpr(c, t, f) => {
            if ev(c)?.as_bool()? {
                ev(t)
            } else {
                ev(f)
            }
        }
        Expr::Access(a, _) => Err(EvalError::Unsupported(format!("read of {}[...]", a.name()))),
        Expr::Binary(op, a, b) => match op {
            BinOp::And => Ok(Value::Bool(ev(a)?.as_bool()? && ev(b)?.as_bool()?)),
            BinOp::Or => Ok(Value::Bool(ev(a)?.as_bool()? || ev(b)?.as_bool()?)),
            BinOp::Eq | BinOp::Ne => {
                let eq = match (ev(a)?, ev(b)?) {
                    (Value::Bool(x), Value::Bool(y)) => x == y,
                    (Value::Bool(_), _) | (_, Value::Bool(_)) => {
                        return Err(EvalError::TypeMismatch(
                            "cannot compare boolean with integer".into(),
                        ))
                    }
                    (x, y) => x.as_int()? == y.as_int()?,
                };
                Ok(Value::Bool(if *op == BinOp::Eq { eq } else { !eq }))
            }
            _ => {
                let x = ev(a)?.as_int()?;
                let y = ev(b)?.as_int()?;
                arith(*op, x, y)
            }
        },
    }
}

fn arith(op: BinOp, x: i128, y: i128) -> Result<Value, EvalError> {
    let v = match op {
        BinOp::Add => Value::Int(x.checked_add(y).ok_or(EvalError::Overflow)?),
        BinOp::Sub => Value::Int(x.checked_sub(y).ok_or(EvalError::Overflow)?),
        BinOp::Mul => Value::Int(x.checked_mul(y).ok_or(EvalError::Overflow)?),
        BinOp::Div => {
            if y == 0 {
                return Err(EvalError::DivisionByZero);
            }
            Value::Int(floor_div(x, y))
        }
        BinOp::Shl => Value::Int(shl(x, y).ok_or(EvalError::Overflow)?),
        BinOp::Lt => Value::Bool(x < y),
        BinOp::Gt => Value::Bool(x > y),
        BinOp::Le => Value::Bool(x <= y),
        BinOp::Ge => Value::Bool(x >= y),
        BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!("handled by caller"),
    };
    Ok(v)
}

pub(crate) fn floor_div(x: i128, y: i128) -> i128 {
    let q = x / y;
    if (x % y != 0) && ((x < 0) != (y < 0)) {
        q - 1
    } else {
        q
    }
}

pub(crate) fn shl(x: i128, y: i128) -> Option<i128> {
    if !(0..127).contains(&y) {
        return None;
    }
    let r = x.checked_shl(y as u32)?;
    (r >> y == x).then_some(r)
}

fn call(
    b: Builtin,
    args: &[Expr],
    env: &Env,
    symbols: &BTreeMap<String, Bits>,
) -> Result<Value, EvalError> {
    let arg = eval_expr(&args[0], env, symbols)?;
    match b {
        Builtin::UInt => Ok(Value::Int(arg.as_int()?)),
        Builtin::SInt => match arg {
            Value::Bits(bits) => Ok(Value::Int(signed(bits))),
            other => Ok(Value::Int(other.as_int()?)),
        },
        Builtin::ZeroExtend | Builtin::SignExtend => {
            let n = eval_expr(&args[1], env, symbols)?.as_int()?;
            let Value::Bits(bits) = arg else {
                return Err(EvalError::TypeMismatch(format!(
                    "{} needs a bit string",
                    b.name()
                )));
            };
            if n < bits.width() as i128 || n > 64 {
                return Err(EvalError::TypeMismatch(format!(
                    "cannot extend {}-bit value to {n} bits",
                    bits.width()
                )));
            }
            let n = n as u32;
            let value = if b == Builtin::SignExtend {
                (signed(bits) as u64) & Bits::mask(n)
            } else {
                bits.value()
            };
            Ok(Value::Bits(Bits::new(value, n).ok_or(EvalError::Overflow)?))
        }
    }
}

fn signed(b: Bits) -> i128 {
    let v = b.value() as i128;
    if b.value() >> (b.width() - 1) & 1 == 1 {
        v - (1i128 << b.width())
    } else {
        v
    }
}
