// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use isadiff_core::asl::eval::{eval_expr, probe, Probe, Value};
use isadiff_core::asl::slice::slice_vars;
use isadiff_core::asl::symbolic::{ConstraintOrigin, SymbolizeError};
use isadiff_core::asl::{
    backward_slice, eval_decode, extract_constraints, parse_asl, symbolize, AslAst, AslError,
    BinOp, Builtin, DecodeOutcome, Expr, Polarity, StmtKind, SymExpr,
};
use isadiff_core::solver::linearize;
use isadiff_core::spec::{parse_spec_file, InstructionSpec};
use isadiff_core::Bits;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<InstructionSpec> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/corpus.txt"
    ))
    .unwrap();
    parse_spec_file(&text).unwrap()
}

fn spec(id: &str) -> InstructionSpec {
    corpus().into_iter().find(|s| s.id() == id).unwrap()
}

fn assign(spec: &InstructionSpec, values: &[(&str, u64)]) -> BTreeMap<String, Bits> {
    let widths = spec.encoding.symbol_widths();
    values
        .iter()
        .map(|(n, v)| (n.to_string(), Bits::new(*v, widths[*n]).unwrap()))
        .collect()
}

fn syms(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
    pairs.iter().map(|(n, w)| (n.to_string(), *w)).collect()
}

#[test]
fn parses_compound_undefined_guard() {
    let s = syms(&[("Rn", 4), ("P", 1), ("W", 1)]);
    let ast = parse_asl(
        "if Rn == '1111' || (P == '0' && W == '0') then UNDEFINED;",
        &s,
    )
    .unwrap();
    assert_eq!(ast.statements.len(), 1);
    let StmtKind::If {
        cond,
        then_body,
        else_body,
    } = &ast.statements[0].kind
    else {
        panic!("expected if");
    };
    let bits = |s: &str| Expr::Bits(s.parse().unwrap());
    let sym = |s: &str| Expr::Symbol(s.into());
    let expected = Expr::binary(
        BinOp::Or,
        Expr::binary(BinOp::Eq, sym("Rn"), bits("1111")),
        Expr::binary(
            BinOp::And,
            Expr::binary(BinOp::Eq, sym("P"), bits("0")),
            Expr::binary(BinOp::Eq, sym("W"), bits("0")),
        ),
    );
    assert_eq!(cond, &expected);
    assert!(matches!(then_body[..], [ref u] if u.kind == StmtKind::Undefined));
    assert!(else_body.is_none());
}

#[test]
fn parses_variable_sum() {
    let text = "d = 1;\ninc = 2;\nd2 = d + inc;";
    let ast = parse_asl(text, &BTreeMap::new()).unwrap();
    assert_eq!(
        ast.statements[2].kind,
        StmtKind::Assign {
            var: "d2".into(),
            rhs: Expr::binary(BinOp::Add, Expr::Var("d".into()), Expr::Var("inc".into())),
        }
    );
}

#[test]
fn rejects_builtin_arity() {
    let s = syms(&[("D", 1), ("Vd", 4)]);
    let err = parse_asl("x = UInt(D:Vd, 3);", &s).unwrap_err();
    assert!(matches!(err, AslError::Syntax { line: 1, .. }), "{err:?}");
}

#[test]
fn rejects_unknown_and_unassigned_names() {
    let s = syms(&[("Rn", 4)]);
    let err = parse_asl("n = UInt(Rm);", &s).unwrap_err();
    assert_eq!(
        err,
        AslError::UnknownIdentifier {
            name: "Rm".into(),
            line: 1,
            col: 10
        }
    );
    let err = parse_asl("if Rn == '0000' then\n    x = 1;\ny = x;", &s).unwrap_err();
    assert!(matches!(err, AslError::UnknownIdentifier { ref name, line: 3, .. } if name == "x"));
    // Assigned on both branches, or the other branch leaves: fine.
    parse_asl(
        "if Rn == '0000' then\n    x = 1;\nelse\n    x = 2;\ny = x;",
        &s,
    )
    .unwrap();
    parse_asl("if Rn == '0000' then x = 1; else UNDEFINED;\ny = x;", &s).unwrap();
}

#[test]
fn rejects_deep_nesting() {
    let s = syms(&[("A", 4)]);
    let mut text = String::new();
    for depth in 0..9 {
        text.push_str(&"    ".repeat(depth));
        text.push_str("if A == '0000' then\n");
    }
    text.push_str(&"    ".repeat(9));
    text.push_str("UNDEFINED;\n");
    assert!(matches!(
        parse_asl(&text, &s),
        Err(AslError::Validation { .. })
    ));
    let nested = "x = if A == '0000' then 1 else if A == '0001' then 2 else 3;";
    parse_asl(nested, &s).unwrap();
    let too_deep =
        "x = if A == '0000' then 1 else if A == '0001' then 2 else if A == '0010' then 3 else 4;";
    assert!(matches!(
        parse_asl(too_deep, &s),
        Err(AslError::Validation { .. })
    ));
}

#[test]
fn decodes_motivating_stream_as_undefined() {
    let str_imm = spec("STR-imm-T32");
    let a = assign(
        &str_imm,
        &[
            ("Rn", 15),
            ("Rt", 0),
            ("P", 1),
            ("U", 0),
            ("W", 0),
            ("imm8", 0xdd),
        ],
    );
    assert_eq!(
        eval_decode(&str_imm.decode_ast, &a).unwrap(),
        DecodeOutcome::Undefined
    );
}

#[test]
fn decodes_pc_destination_as_unpredictable() {
    let str_imm = spec("STR-imm-T32");
    let a = assign(
        &str_imm,
        &[
            ("Rn", 0),
            ("Rt", 15),
            ("P", 1),
            ("U", 1),
            ("W", 1),
            ("imm8", 0),
        ],
    );
    assert_eq!(
        eval_decode(&str_imm.decode_ast, &a).unwrap(),
        DecodeOutcome::Unpredictable
    );
}

#[test]
fn vld4_register_overflow_is_unpredictable() {
    let vld4 = spec("VLD4-A32");
    let a = assign(
        &vld4,
        &[
            ("D", 1),
            ("Vd", 13),
            ("type", 1),
            ("size", 1),
            ("align", 0),
            ("Rn", 0),
            ("Rm", 0),
        ],
    );
    assert_eq!(
        eval_decode(&vld4.decode_ast, &a).unwrap(),
        DecodeOutcome::Unpredictable
    );
    // Same, one register lower, with inc = 1: d4 = 28.
    let a = assign(
        &vld4,
        &[
            ("D", 1),
            ("Vd", 9),
            ("type", 0),
            ("size", 1),
            ("align", 0),
            ("Rn", 0),
            ("Rm", 0),
        ],
    );
    let DecodeOutcome::Ok(b) = eval_decode(&vld4.decode_ast, &a).unwrap() else {
        panic!("expected Ok");
    };
    assert_eq!(b["d4"], 28);
    assert_eq!(b["inc"], 1);
    assert_eq!(b["elements"], 4);
    assert_eq!(b["alignment"], 1);
}

#[test]
fn unmatched_case_without_otherwise_is_undefined() {
    let vld4 = spec("VLD4-A32");
    let a = assign(
        &vld4,
        &[
            ("D", 0),
            ("Vd", 0),
            ("type", 7),
            ("size", 0),
            ("align", 0),
            ("Rn", 0),
            ("Rm", 0),
        ],
    );
    assert_eq!(
        eval_decode(&vld4.decode_ast, &a).unwrap(),
        DecodeOutcome::Undefined
    );
}

#[test]
fn division_by_zero_is_an_error() {
    let s = syms(&[("A", 2)]);
    let ast = parse_asl("x = 8 DIV UInt(A);", &s).unwrap();
    let a = BTreeMap::from([("A".to_string(), Bits::new(0, 2).unwrap())]);
    assert!(eval_decode(&ast, &a).is_err());
}

fn find<'a>(
    cs: &'a [isadiff_core::asl::Constraint],
    source: &str,
    polarity: Polarity,
) -> &'a isadiff_core::asl::Constraint {
    cs.iter()
        .find(|c| c.source.to_string() == source && c.polarity == polarity)
        .unwrap_or_else(|| panic!("no constraint {source}"))
}

#[test]
fn extracts_both_polarities_and_case_arms() {
    let vld4 = spec("VLD4-A32");
    let cs = extract_constraints(&vld4.decode_ast);
    let sources: Vec<String> = cs.iter().map(|c| c.source.to_string()).collect();
    find(&cs, "(d4 > 31)", Polarity::Assert);
    find(&cs, "(d4 > 31)", Polarity::Negate);
    let t0 = find(&cs, "(type == '0000')", Polarity::Assert);
    assert_eq!(t0.origin, ConstraintOrigin::CaseArm);
    find(&cs, "(type == '0001')", Polarity::Assert);
    find(&cs, "(m != 15)", Polarity::Negate);
    find(&cs, "(m != 13)", Polarity::Assert);
    find(&cs, "(size == '11')", Polarity::Assert);
    find(&cs, "(align == '00')", Polarity::Assert);
    assert_eq!(cs.len() % 2, 0, "{sources:?}");

    let no_branches = parse_asl("x = 1;\ny = x + 2;", &BTreeMap::new()).unwrap();
    assert!(extract_constraints(&no_branches).is_empty());
}

#[test]
fn path_conditions_follow_enclosing_guards() {
    let s = syms(&[("A", 2), ("B", 2)]);
    let ast = parse_asl(
        "if A == '00' then\n    if B == '11' then UNDEFINED;\nelse\n    x = UInt(B) > 1;",
        &s,
    )
    .unwrap();
    let cs = extract_constraints(&ast);
    let inner = find(&cs, "(B == '11')", Polarity::Assert);
    assert_eq!(inner.path_source.len(), 1);
    assert_eq!(inner.path_source[0].to_string(), "(A == '00')");
    let other = find(&cs, "(UInt(B) > 1)", Polarity::Assert);
    assert_eq!(other.path_source[0].to_string(), "!(A == '00')");
}

fn assigned_lines(ast: &AslAst) -> BTreeSet<usize> {
    ast.walk()
        .into_iter()
        .filter(|s| matches!(s.kind, StmtKind::Assign { .. }))
        .map(|s| s.line)
        .collect()
}

#[test]
fn slices_vld4_register_bound() {
    let vld4 = spec("VLD4-A32");
    let slice = backward_slice(&vld4.decode_ast, &SymExpr::Var("d4".into()));
    assert_eq!(
        assigned_lines(&slice),
        BTreeSet::from([3, 5, 10, 11, 12, 13])
    );
    assert_eq!(slice.statements.len(), 5);
    assert!(matches!(slice.statements[0].kind, StmtKind::Case { .. }));
    assert_eq!(backward_slice(&slice, &SymExpr::Var("d4".into())), slice);
}

#[test]
fn slices_writeback_flag() {
    let str_imm = spec("STR-imm-T32");
    let slice = backward_slice(&str_imm.decode_ast, &SymExpr::Var("wback".into()));
    assert_eq!(slice.statements.len(), 1);
    assert_eq!(slice.statements[0].line, 7);
    let only_symbol = backward_slice(&str_imm.decode_ast, &SymExpr::sym("Rn", 4));
    assert!(only_symbol.statements.is_empty());
}

#[test]
fn slicing_is_an_idempotent_subsequence() {
    for s in corpus() {
        let ast = s.combined_ast();
        let all_ids = ast.ids();
        for c in extract_constraints(&ast) {
            let vars: BTreeSet<String> = c
                .source
                .vars()
                .into_iter()
                .chain(c.path_source.iter().flat_map(|p| p.vars()))
                .map(String::from)
                .collect();
            let slice = slice_vars(&ast, vars.clone(), Some(c.site));
            let ids = slice.ids();
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
            assert!(ids.iter().all(|i| all_ids.contains(i)));
            assert_eq!(slice_vars(&slice, vars, Some(c.site)), slice, "{}", s.id());
        }
    }
}

fn symbolized(
    spec: &InstructionSpec,
    source: &str,
    polarity: Polarity,
) -> isadiff_core::asl::Constraint {
    let ast = spec.combined_ast();
    let cs = extract_constraints(&ast);
    let c = find(&cs, source, polarity);
    let vars = c.source.vars().into_iter().map(String::from).collect();
    let slice = slice_vars(&ast, vars, Some(c.site));
    symbolize(&slice, c, &spec.encoding.symbol_widths()).unwrap()
}

#[test]
fn symbolizes_register_bound_to_linear_form() {
    let vld4 = spec("VLD4-A32");
    let c = symbolized(&vld4, "(d4 > 31)", Polarity::Assert);
    let SymExpr::Cmp(_, lhs, rhs) = &c.expr else {
        panic!("expected comparison, got {}", c.expr);
    };
    let l = linearize(lhs).unwrap();
    assert_eq!(
        l.coeffs,
        BTreeMap::from([("D".into(), 16), ("Vd".into(), 1), ("inc".into(), 3)])
    );
    assert_eq!(l.constant, 0);
    assert_eq!(**rhs, SymExpr::Const(31));
    assert_eq!(c.aux.len(), 1);
    assert_eq!(c.aux[0].name, "inc");
    assert_eq!(c.side.len(), 1);
    assert_eq!(c.side[0].to_string(), "((inc == 1) || (inc == 2))");
    let widths = c.symbols();
    assert_eq!(widths["D"], 1);
    assert_eq!(widths["Vd"], 4);
}

#[test]
fn symbolizes_concat_by_width() {
    let s = syms(&[("D", 1), ("Vd", 4)]);
    let ast = parse_asl("d = UInt(D:Vd);\nif d == 20 then UNDEFINED;", &s).unwrap();
    let cs = extract_constraints(&ast);
    let c = symbolize(&ast, &cs[0], &s).unwrap();
    assert_eq!(c.expr.to_string(), "(((D * 16) + Vd) == 20)");
}

#[test]
fn symbol_only_constraint_is_unchanged() {
    let str_imm = spec("STR-imm-T32");
    let c = symbolized(&str_imm, "(Rn == '1111')", Polarity::Assert);
    assert_eq!(
        c.expr,
        SymExpr::cmp(
            isadiff_core::asl::symbolic::CmpOp::Eq,
            SymExpr::sym("Rn", 4),
            SymExpr::Const(15)
        )
    );
    assert!(c.side.is_empty());
}

#[test]
fn runtime_state_is_not_symbolizable() {
    let cbz = spec("CBZ-A64");
    let ast = cbz.combined_ast();
    let cs = extract_constraints(&ast);
    let c = cs
        .iter()
        .find(|c| c.source.to_string().contains("X["))
        .unwrap();
    let err = symbolize(&ast, c, &cbz.encoding.symbol_widths()).unwrap_err();
    assert!(matches!(err, SymbolizeError::RuntimeDependent(_)));
}

/// Evaluates the original guard by running the pseudocode up to the
/// constraint's statement, and compares with the symbolized form.
#[test]
fn symbolic_agrees_with_concrete_evaluation() {
    let mut checked = 0usize;
    let mut vld4_bound = 0usize;
    for s in corpus() {
        let widths = s.encoding.symbol_widths();
        let total: u32 = widths.values().sum();
        // Exhaustive for small encodings, seeded samples otherwise.
        let codes: Vec<u128> = if total <= 16 {
            (0..1u128 << total).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..4096)
                .map(|_| rng.gen::<u128>() & ((1u128 << total) - 1))
                .collect()
        };
        let ast = s.combined_ast();
        for c in extract_constraints(&ast) {
            if c.polarity == Polarity::Negate {
                continue;
            }
            let vars = c
                .source
                .vars()
                .into_iter()
                .chain(c.path_source.iter().flat_map(|p| p.vars()))
                .map(String::from)
                .collect();
            let slice = slice_vars(&ast, vars, Some(c.site));
            let Ok(sym) = symbolize(&slice, &c, &widths) else {
                continue;
            };
            let names: Vec<&String> = widths.keys().collect();
            for &code in &codes {
                let mut shift = 0;
                let mut a = BTreeMap::new();
                let mut ints = BTreeMap::new();
                for n in &names {
                    let w = widths[*n];
                    let v = ((code >> shift) & ((1 << w) - 1)) as u64;
                    shift += w;
                    a.insert((*n).clone(), Bits::new(v, w).unwrap());
                    ints.insert((*n).clone(), v as i128);
                }
                let Ok(Probe::Reached(env)) = probe(&ast, &a, Some(c.site)) else {
                    continue;
                };
                let concrete = match eval_expr(&c.source, &env, &a) {
                    Ok(Value::Bool(b)) => b,
                    _ => continue,
                };
                let full = sym
                    .with_aux(&ints)
                    .expect("aux symbol defined on reached paths");
                assert_eq!(
                    sym.expr.holds(&full),
                    concrete,
                    "{} {} at {:?}",
                    s.id(),
                    c.source,
                    ints
                );
                for (p_src, p_sym) in c.path_source.iter().zip(&sym.path_condition) {
                    let Ok(Value::Bool(pb)) = eval_expr(p_src, &env, &a) else {
                        continue;
                    };
                    assert_eq!(p_sym.holds(&full), pb, "{} path {}", s.id(), p_src);
                }
                checked += 1;
                if s.id() == "VLD4-A32" && c.source.to_string() == "(d4 > 31)" {
                    vld4_bound += 1;
                }
            }
        }
    }
    assert!(checked > 100_000, "only {checked} points checked");
    assert!(vld4_bound > 100, "only {vld4_bound} VLD4 points checked");
}

#[test]
fn builtins_extend_values() {
    let s = syms(&[("imm", 4)]);
    let ast = parse_asl(
        "a = SInt(imm);\nb = SignExtend(imm, 8);\nc = ZeroExtend(imm, 8);\nd = UInt(b);",
        &s,
    )
    .unwrap();
    let a = BTreeMap::from([("imm".to_string(), Bits::new(0b1010, 4).unwrap())]);
    let DecodeOutcome::Ok(b) = eval_decode(&ast, &a).unwrap() else {
        panic!()
    };
    assert_eq!(b["a"], -6);
    assert_eq!(b["b"], 0b1111_1010);
    assert_eq!(b["c"], 0b1010);
    assert_eq!(b["d"], 0b1111_1010);
    assert_eq!(Builtin::from_name("UInt"), Some(Builtin::UInt));
}
