// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use crate::bits::Bits;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    UInt,
    SInt,
    ZeroExtend,
    SignExtend,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "UInt" => Some(Self::UInt),
            "SInt" => Some(Self::SInt),
            "ZeroExtend" => Some(Self::ZeroExtend),
            "SignExtend" => Some(Self::SignExtend),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Self::UInt | Self::SInt => 1,
            Self::ZeroExtend | Self::SignExtend => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UInt => "UInt",
            Self::SInt => "SInt",
            Self::ZeroExtend => "ZeroExtend",
            Self::SignExtend => "SignExtend",
        }
    }
}

/// Architectural state reached through indexing, e.g. `R[n]` or
/// `MemU[address, 4]`. These are parsed and sliced but never interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Accessor {
    R,
    X,
    MemU,
    MemA,
}

impl Accessor {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "R" => Some(Self::R),
            "X" => Some(Self::X),
            "MemU" => Some(Self::MemU),
            "MemA" => Some(Self::MemA),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Self::R | Self::X => 1,
            Self::MemU | Self::MemA => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::R => "R",
            Self::X => "X",
            Self::MemU => "MemU",
            Self::MemA => "MemA",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Shl,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            Self::Eq | Self::Ne | Self::Lt | Self::Gt | Self::Le | Self::Ge
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Add => "+",
            Self::Sub => "-",
            Self::Mul => "*",
            Self::Div => "DIV",
            Self::Shl => "<<",
            Self::Eq => "==",
            Self::Ne => "!=",
            Self::Lt => "<",
            Self::Gt => ">",
            Self::Le => "<=",
            Self::Ge => ">=",
            Self::And => "&&",
            Self::Or => "||",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Reference to an encoding symbol.
    Symbol(String),
    /// Reference to a pseudocode variable.
    Var(String),
    Bits(Bits),
    Int(i128),
    Concat(Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IfExpr(Box<Expr>, Box<Expr>, Box<Expr>),
    Access(Accessor, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Self::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Calls `f` on this expression and every sub-expression, pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Symbol(_) | Expr::Var(_) | Expr::Bits(_) | Expr::Int(_) => {}
            Expr::Concat(a, b) | Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Not(a) => a.visit(f),
            Expr::Call(_, args) | Expr::Access(_, args) => {
                for a in args {
                    a.visit(f);
                }
            }
            Expr::IfExpr(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.contains(&v.as_str()) {
                    out.push(v.as_str());
                }
            }
        });
        out
    }

    pub fn symbols(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Symbol(v) = e {
                if !out.contains(&v.as_str()) {
                    out.push(v.as_str());
                }
            }
        });
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Symbol(s) | Expr::Var(s) => write!(f, "{s}"),
            Expr::Bits(b) => write!(f, "'{b}'"),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Concat(a, b) => write!(f, "{a}:{b}"),
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                write_list(f, args)?;
                write!(f, ")")
            }
            Expr::Access(a, args) => {
                write!(f, "{}[", a.name())?;
                write_list(f, args)?;
                write!(f, "]")
            }
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Not(a) => write!(f, "!{a}"),
            Expr::IfExpr(c, t, e) => write!(f, "(if {c} then {t} else {e})"),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseArm {
    pub pattern: Bits,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Assign {
        var: String,
        rhs: Expr,
    },
    Store {
        target: Accessor,
        args: Vec<Expr>,
        rhs: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
    },
    Case {
        scrutinee: Expr,
        arms: Vec<CaseArm>,
        otherwise: Option<Vec<Stmt>>,
    },
    Undefined,
    Unpredictable,
}

/// One statement. `id` is the statement's pre-order position in its
/// program and is stable across slicing; `line` is the 1-based source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub id: usize,
    pub line: usize,
    pub kind: StmtKind,
}

impl Stmt {
    /// Nested statement bodies in source order.
    pub fn bodies(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                let mut v = vec![then_body.as_slice()];
                if let Some(e) = else_body {
                    v.push(e.as_slice());
                }
                v
            }
            StmtKind::Case {
                arms, otherwise, ..
            } => {
                let mut v: Vec<&[Stmt]> = arms.iter().map(|a| a.body.as_slice()).collect();
                if let Some(o) = otherwise {
                    v.push(o.as_slice());
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Expressions evaluated directly by this statement (not by nested bodies).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Assign { rhs, .. } => vec![rhs],
            StmtKind::Store { args, rhs, .. } => {
                let mut v: Vec<&Expr> = args.iter().collect();
                v.push(rhs);
                v
            }
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::Case { scrutinee, .. } => vec![scrutinee],
            StmtKind::Undefined | StmtKind::Unpredictable => Vec::new(),
        }
    }
}

/// A parsed decode or execute program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AslAst {
    pub statements: Vec<Stmt>,
}

impl AslAst {
    /// All statements, pre-order.
    pub fn walk(&self) -> Vec<&Stmt> {
        fn go<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
            for s in stmts {
                out.push(s);
                for b in s.bodies() {
                    go(b, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&self.statements, &mut out);
        out
    }

    pub fn ids(&self) -> Vec<usize> {
        self.walk().iter().map(|s| s.id).collect()
    }

    /// Concatenates two programs, renumbering `other`'s ids to follow this
    /// program's.
    pub fn chain(&self, other: &AslAst) -> AslAst {
        let offset = self.walk().iter().map(|s| s.id + 1).max().unwrap_or(0);
        fn shift(stmts: &[Stmt], offset: usize) -> Vec<Stmt> {
            stmts
                .iter()
                .map(|s| {
                    let kind = match &s.kind {
                        StmtKind::If {
                            cond,
                            then_body,
                            else_body,
                        } => StmtKind::If {
                            cond: cond.clone(),
                            then_body: shift(then_body, offset),
                            else_body: else_body.as_ref().map(|e| shift(e, offset)),
                        },
                        StmtKind::Case {
                            scrutinee,
                            arms,
                            otherwise,
                        } => StmtKind::Case {
                            scrutinee: scrutinee.clone(),
                            arms: arms
                                .iter()
                                .map(|a| CaseArm {
                                    pattern: a.pattern,
                                    body: shift(&a.body, offset),
                                })
                                .collect(),
                            otherwise: otherwise.as_ref().map(|o| shift(o, offset)),
                        },
                        k => k.clone(),
                    };
                    Stmt {
                        id: s.id + offset,
                        line: s.line,
                        kind,
                    }
                })
                .collect()
        }
        let mut statements = self.statements.clone();
        statements.extend(shift(&other.statements, offset));
        AslAst { statements }
    }
}
