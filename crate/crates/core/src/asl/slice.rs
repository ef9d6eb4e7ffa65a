// SPDX-License-Identifier: Apache-2.0

//! Backward slicing over variable definitions.

use std::collections::BTreeSet;

use super::ast::{AslAst, CaseArm, Stmt, StmtKind};
use super::symbolic::SymExpr;

/// Keeps only the statements that can affect the variables of `target`,
/// together with the `if`/`case` structure enclosing them. Statement ids
/// are preserved, so slicing is idempotent.
pub fn backward_slice(ast: &AslAst, target: &SymExpr) -> AslAst {
    slice_vars(ast, target.vars(), None)
}

/// Slices for `vars` as observed just before statement `site`; statements
/// with id `>= site` are dropped.
pub fn slice_vars(ast: &AslAst, mut vars: BTreeSet<String>, site: Option<usize>) -> AslAst {
    AslAst {
        statements: slice_block(&ast.statements, &mut vars, site, true),
    }
}

fn slice_block(
    stmts: &[Stmt],
    needed: &mut BTreeSet<String>,
    site: Option<usize>,
    unconditional: bool,
) -> Vec<Stmt> {
    let mut kept = Vec::new();
    for s in stmts.iter().rev() {
        if site.is_some_and(|limit| s.id >= limit) {
            continue;
        }
        match &s.kind {
            StmtKind::Assign { var, rhs } => {
                if needed.contains(var) {
                    if unconditional {
                        needed.remove(var);
                    }
                    needed.extend(rhs.vars().into_iter().map(String::from));
                    kept.push(s.clone());
                }
            }
            StmtKind::Store { .. } => {}
            // Inside a kept branch, an early exit still decides which
            // definitions reach the merge point.
            StmtKind::Undefined | StmtKind::Unpredictable => {
                if !unconditional {
                    kept.push(s.clone());
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let mut n_then = needed.clone();
                let t = slice_block(then_body, &mut n_then, site, false);
                let mut n_else = needed.clone();
                let e = else_body
                    .as_ref()
                    .map(|b| slice_block(b, &mut n_else, site, false))
                    .unwrap_or_default();
                if !has_effect(&t) && !has_effect(&e) {
                    continue;
                }
                needed.extend(n_then);
                needed.extend(n_else);
                needed.extend(cond.vars().into_iter().map(String::from));
                kept.push(Stmt {
                    kind: StmtKind::If {
                        cond: cond.clone(),
                        then_body: t,
                        else_body: if e.is_empty() { None } else { Some(e) },
                    },
                    ..s.clone()
                });
            }
            StmtKind::Case {
                scrutinee,
                arms,
                otherwise,
            } => {
                let mut union = BTreeSet::new();
                let mut any = false;
                let new_arms: Vec<CaseArm> = arms
                    .iter()
                    .map(|arm| {
                        let mut n = needed.clone();
                        let body = slice_block(&arm.body, &mut n, site, false);
                        any |= has_effect(&body);
                        union.extend(n);
                        CaseArm {
                            pattern: arm.pattern,
                            body,
                        }
                    })
                    .collect();
                let new_otherwise = otherwise.as_ref().map(|o| {
                    let mut n = needed.clone();
                    let body = slice_block(o, &mut n, site, false);
                    any |= has_effect(&body);
                    union.extend(n);
                    body
                });
                if !any {
                    continue;
                }
                needed.extend(union);
                needed.extend(scrutinee.vars().into_iter().map(String::from));
                kept.push(Stmt {
                    kind: StmtKind::Case {
                        scrutinee: scrutinee.clone(),
                        arms: new_arms,
                        otherwise: new_otherwise,
                    },
                    ..s.clone()
                });
            }
        }
    }
    kept.reverse();
    kept
}

fn has_effect(stmts: &[Stmt]) -> bool {
    stmts
        .iter()
        .any(|s| !matches!(s.kind, StmtKind::Undefined | StmtKind::Unpredictable))
}
