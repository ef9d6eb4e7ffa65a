// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use isadiff_core::asl::symbolic::{ArithOp, CmpOp};
use isadiff_core::asl::SymExpr;
use isadiff_core::solver::{SolveError, Solver, SymbolDomain};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `sum(coeff * symbol) + constant <op> 0`, plus an optional second atom
/// conjoined to it.
#[derive(Clone, Debug)]
struct Atom {
    coeffs: Vec<i128>,
    constant: i128,
    op: CmpOp,
}

#[derive(Clone, Debug)]
struct Problem {
    widths: Vec<u32>,
    atoms: Vec<Atom>,
}

const OPS: [CmpOp; 6] = [
    CmpOp::Eq,
    CmpOp::Ne,
    CmpOp::Lt,
    CmpOp::Gt,
    CmpOp::Le,
    CmpOp::Ge,
];

fn name(i: usize) -> String {
    format!("s{i}")
}

impl Problem {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(1..=4);
        let widths: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
        let atoms = (0..rng.gen_range(1..=2))
            .map(|_| Atom {
                coeffs: (0..n).map(|_| rng.gen_range(-4..=4)).collect(),
                constant: rng.gen_range(-40..=40),
                op: OPS[rng.gen_range(0..OPS.len())],
            })
            .collect();
        Self { widths, atoms }
    }

    fn expr(&self) -> SymExpr {
        let atom = |a: &Atom| {
            let mut lhs = SymExpr::Const(a.constant);
            for (i, &c) in a.coeffs.iter().enumerate() {
                let term = SymExpr::arith(
                    ArithOp::Mul,
                    SymExpr::Const(c),
                    SymExpr::sym(name(i), self.widths[i]),
                );
                lhs = SymExpr::arith(ArithOp::Add, lhs, term);
            }
            SymExpr::cmp(a.op, lhs, SymExpr::Const(0))
        };
        let mut it = self.atoms.iter().map(atom);
        let first = it.next().unwrap();
        it.fold(first, SymExpr::and)
    }

    fn domains(&self) -> Vec<SymbolDomain> {
        self.widths
            .iter()
            .enumerate()
            .map(|(i, &w)| SymbolDomain::new(name(i), w))
            .collect()
    }

    fn holds(&self, vals: &[i128]) -> bool {
        self.atoms.iter().all(|a| {
            let v: i128 = a.constant + a.coeffs.iter().zip(vals).map(|(c, x)| c * x).sum::<i128>();
            match a.op {
                CmpOp::Eq => v == 0,
                CmpOp::Ne => v != 0,
                CmpOp::Lt => v < 0,
                CmpOp::Gt => v > 0,
                CmpOp::Le => v <= 0,
                CmpOp::Ge => v >= 0,
            }
        })
    }

    /// Brute force over every assignment.
    fn satisfiable(&self) -> bool {
        let total: u32 = self.widths.iter().sum();
        (0u64..1 << total).any(|mut packed| {
            let vals: Vec<i128> = self
                .widths
                .iter()
                .map(|&w| {
                    let v = packed & ((1 << w) - 1);
                    packed >>= w;
                    v as i128
                })
                .collect();
            self.holds(&vals)
        })
    }

    fn check(&self, a: &BTreeMap<String, i128>) -> bool {
        let vals: Vec<i128> = (0..self.widths.len()).map(|i| a[&name(i)]).collect();
        vals.iter()
            .zip(&self.widths)
            .all(|(v, w)| (0..1i128 << w).contains(v))
            && self.holds(&vals)
    }
}

#[test]
fn decisions_match_brute_force_on_500_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let solver = Solver::default();
    let (mut sat, mut unsat) = (0, 0);
    for _ in 0..500 {
        let p = Problem::random(&mut rng);
        let got = solver.solve_formula(&p.expr(), &p.domains()).unwrap();
        let want = p.satisfiable();
        assert_eq!(got.is_some(), want, "{p:?}");
        if let Some(a) = got {
            assert!(p.check(&a), "{p:?} {a:?}");
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    assert!(sat > 50 && unsat > 50, "sat {sat} unsat {unsat}");
}

#[test]
fn heuristic_tier_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let solver = Solver {
        exhaustive_bits: 0,
        budget: 2_000,
        ..Solver::default()
    };
    let (mut found, mut timeouts) = (0, 0);
    for _ in 0..500 {
        let p = Problem::random(&mut rng);
        let want = p.satisfiable();
        match solver.solve_formula(&p.expr(), &p.domains()) {
            Ok(Some(a)) => {
                assert!(want && p.check(&a), "{p:?} {a:?}");
                found += 1;
            }
            // Unsat claims come only from interval propagation.
            Ok(None) => assert!(!want, "{p:?}"),
            Err(SolveError::Timeout { .. }) => timeouts += 1,
            Err(e) => panic!("{e}"),
        }
    }
    assert!(found > 100, "found {found}, timeouts {timeouts}");
}

#[test]
fn wide_symbols_use_the_heuristic_tier() {
    // d = D:Vd style 5-bit value plus a 12-bit immediate: 17 bits in total.
    let x = SymExpr::sym("imm12", 12);
    let d = SymExpr::sym("Vd", 5);
    let f = SymExpr::and(
        SymExpr::cmp(CmpOp::Eq, x.clone(), SymExpr::Const(4000)),
        SymExpr::cmp(
            CmpOp::Gt,
            SymExpr::arith(ArithOp::Add, d, SymExpr::Const(3)),
            SymExpr::Const(31),
        ),
    );
    let doms = [SymbolDomain::new("imm12", 12), SymbolDomain::new("Vd", 5)];
    let a = Solver::default().solve_formula(&f, &doms).unwrap().unwrap();
    assert_eq!(a["imm12"], 4000);
    assert!(a["Vd"] > 28);
    let never = SymExpr::cmp(CmpOp::Gt, x, SymExpr::Const(4095));
    assert_eq!(
        Solver::default().solve_formula(&never, &doms).unwrap(),
        None
    );
}

#[test]
fn missing_domain_and_bad_width() {
    let f = SymExpr::cmp(CmpOp::Eq, SymExpr::sym("a", 3), SymExpr::Const(1));
    assert!(matches!(
        Solver::default().solve_formula(&f, &[]),
        Err(SolveError::MissingDomain(_))
    ));
    assert!(matches!(
        Solver::default().solve_formula(&f, &[SymbolDomain::new("a", 0)]),
        Err(SolveError::BadWidth { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agrees_with_brute_force(seed in any::<u64>()) {
        let p = Problem::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let got = Solver::default().solve_formula(&p.expr(), &p.domains()).unwrap();
        prop_assert_eq!(got.is_some(), p.satisfiable());
        if let Some(a) = got {
            prop_assert!(p.check(&a));
        }
    }
}
