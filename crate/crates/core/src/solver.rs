// SPDX-License-Identifier: Apache-2.0

//! Witness search for symbolized constraints over bounded symbol domains.
//!
//! Small joint domains (at most 2^16 assignments) are enumerated
//! exhaustively in a fixed order, so the answer is complete and
//! reproducible. Larger domains go through interval propagation on the
//! linear atoms of the formula (which can prove unsatisfiability), then a
//! candidate-value sweep, then a seeded random search with a trial budget.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asl::symbolic::{ArithOp, CmpOp, Constraint, Polarity, SymExpr};

pub const MAX_SYMBOL_WIDTH: u32 = 32;
pub const EXHAUSTIVE_LIMIT_BITS: u32 = 16;
pub const DEFAULT_BUDGET: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolDomain {
    pub symbol: String,
    pub width: u32,
}

impl SymbolDomain {
    pub fn new(symbol: impl Into<String>, width: u32) -> Self {
        Self {
            symbol: symbol.into(),
            width,
        }
    }

    pub fn domain_size(&self) -> u64 {
        1u64 << self.width
    }

    fn max(&self) -> i128 {
        (1i128 << self.width) - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub assignment: BTreeMap<String, i128>,
    pub polarity: Polarity,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("no witness found within {budget} random trials")]
    Timeout { budget: u64 },
    #[error("symbol `{0}` has no domain")]
    MissingDomain(String),
    #[error("symbol `{symbol}` has unsupported width {width}")]
    BadWidth { symbol: String, width: u32 },
    #[error("constraint still refers to variables or runtime state: {0}")]
    NotSymbolized(String),
    #[error("internal error: witness {0:?} does not satisfy the constraint")]
    Unsound(BTreeMap<String, i128>),
}

/// Domains for every free symbol of a constraint, at their declared widths.
pub fn domains_for(c: &Constraint) -> Vec<SymbolDomain> {
    c.symbols()
        .into_iter()
        .map(|(s, w)| SymbolDomain::new(s, w))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Solver {
    pub seed: u64,
    pub budget: u64,
    /// Joint domains of at most this many bits are enumerated exhaustively.
    pub exhaustive_bits: u32,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            seed: 42,
            budget: DEFAULT_BUDGET,
            exhaustive_bits: EXHAUSTIVE_LIMIT_BITS,
        }
    }
}

/// [`Solver::solve`] with default settings.
pub fn solve(c: &Constraint, domains: &[SymbolDomain]) -> Result<Option<Witness>, SolveError> {
    Solver::default().solve(c, domains)
}

/// [`Solver::solve_both`] with default settings.
pub fn solve_both(
    c: &Constraint,
    domains: &[SymbolDomain],
) -> Result<(Option<Witness>, Option<Witness>), SolveError> {
    Solver::default().solve_both(c, domains)
}

impl Solver {
    /// Finds an assignment satisfying the constraint under its polarity,
    /// together with its path condition and side constraints.
    pub fn solve(
        &self,
        c: &Constraint,
        domains: &[SymbolDomain],
    ) -> Result<Option<Witness>, SolveError> {
        let formula = c.formula();
        Ok(self
            .solve_formula(&formula, domains)?
            .map(|assignment| Witness {
                assignment,
                polarity: c.polarity,
            }))
    }

    /// Finds an assignment making `formula` true.
    pub fn solve_formula(
        &self,
        formula: &SymExpr,
        domains: &[SymbolDomain],
    ) -> Result<Option<BTreeMap<String, i128>>, SolveError> {
        if formula.has_opaque() || !formula.vars().is_empty() {
            return Err(SolveError::NotSymbolized(formula.to_string()));
        }
        let mut doms: Vec<SymbolDomain> = Vec::new();
        for name in formula.symbols().into_keys() {
            let d = domains
                .iter()
                .find(|d| d.symbol == name)
                .ok_or_else(|| SolveError::MissingDomain(name.clone()))?;
            if d.width == 0 || d.width > MAX_SYMBOL_WIDTH {
                return Err(SolveError::BadWidth {
                    symbol: name,
                    width: d.width,
                });
            }
            doms.push(d.clone());
        }
        let total_bits: u32 = doms.iter().map(|d| d.width).sum();
        let found = if total_bits <= self.exhaustive_bits {
            enumerate(formula, &doms)
        } else {
            self.search(formula, &doms)?
        };
        match found {
            Some(a) if !formula.holds(&a) => Err(SolveError::Unsound(a)),
            other => Ok(other),
        }
    }

    pub fn solve_both(
        &self,
        c: &Constraint,
        domains: &[SymbolDomain],
    ) -> Result<(Option<Witness>, Option<Witness>), SolveError> {
        let a = self.solve(&c.with_polarity(Polarity::Assert), domains)?;
        let n = self.solve(&c.with_polarity(Polarity::Negate), domains)?;
        Ok((a, n))
    }

    fn search(
        &self,
        formula: &SymExpr,
        doms: &[SymbolDomain],
    ) -> Result<Option<BTreeMap<String, i128>>, SolveError> {
        let mut bounds: BTreeMap<String, (i128, i128)> = doms
            .iter()
            .map(|d| (d.symbol.clone(), (0, d.max())))
            .collect();
        let mut conjuncts = Vec::new();
        flatten(formula, true, &mut conjuncts);
        let atoms: Vec<(Linear, CmpOp)> = conjuncts
            .iter()
            .filter_map(|e| match e {
                SymExpr::Cmp(op, a, b) => Some((linearize(a)?.sub(&linearize(b)?), *op)),
                _ => None,
            })
            .collect();
        if atoms.len() < conjuncts.len() {
            log::debug!("non-linear or disjunctive terms in {formula}; using randomized search");
        }
        if !propagate(&atoms, &mut bounds) {
            return Ok(None);
        }
        if let Some(a) = self.sweep_candidates(formula, &atoms, &bounds) {
            return Ok(Some(a));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let names: Vec<&String> = bounds.keys().collect();
        let mut a = BTreeMap::new();
        for _ in 0..self.budget {
            for n in &names {
                let (lo, hi) = bounds[*n];
                a.insert((*n).clone(), rng.gen_range(lo..=hi));
            }
            if formula.holds(&a) {
                return Ok(Some(a));
            }
        }
        Err(SolveError::Timeout {
            budget: self.budget,
        })
    }

    /// Tries combinations of bound endpoints and values adjacent to the
    /// constants that single-symbol atoms compare against.
    fn sweep_candidates(
        &self,
        formula: &SymExpr,
        atoms: &[(Linear, CmpOp)],
        bounds: &BTreeMap<String, (i128, i128)>,
    ) -> Option<BTreeMap<String, i128>> {
        let mut cands: BTreeMap<String, Vec<i128>> = BTreeMap::new();
        for (name, (lo, hi)) in bounds {
            let mut c = vec![*lo, *hi, 0, 1];
            for (lin, _) in atoms {
                if lin.coeffs.len() == 1 {
                    if let Some(&k) = lin.coeffs.get(name) {
                        if k != 0 && lin.constant % k == 0 {
                            let root = -lin.constant / k;
                            c.extend([root - 1, root, root + 1]);
                        }
                    }
                }
            }
            c.retain(|v| lo <= v && v <= hi);
            c.sort_unstable();
            c.dedup();
            cands.insert(name.clone(), c);
        }
        let total: u128 = cands.values().map(|v| v.len() as u128).product();
        if total > self.budget as u128 {
            return None;
        }
        let names: Vec<&String> = cands.keys().collect();
        let mut idx = vec![0usize; names.len()];
        let mut a = BTreeMap::new();
        loop {
            for (i, n) in names.iter().enumerate() {
                a.insert((*n).clone(), cands[*n][idx[i]]);
            }
            if formula.holds(&a) {
                return Some(a);
            }
            if !advance(&mut idx, |i| cands[names[i]].len()) {
                return None;
            }
        }
    }
}

/// Odometer step: last position fastest. False once wrapped.
fn advance(idx: &mut [usize], len: impl Fn(usize) -> usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < len(i) {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Lexicographic by symbol name, first symbol most significant, ascending.
fn enumerate(formula: &SymExpr, doms: &[SymbolDomain]) -> Option<BTreeMap<String, i128>> {
    let mut doms = doms.to_vec();
    doms.sort();
    let mut vals = vec![0usize; doms.len()];
    let mut a: BTreeMap<String, i128> = doms.iter().map(|d| (d.symbol.clone(), 0)).collect();
    loop {
        for (d, v) in doms.iter().zip(&vals) {
            *a.get_mut(&d.symbol).unwrap() = *v as i128;
        }
        if formula.holds(&a) {
            return Some(a);
        }
        if !advance(&mut vals, |i| doms[i].domain_size() as usize) {
            return None;
        }
    }
}

/// `sum(coeffs[s] * s) + constant`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Linear {
    pub coeffs: BTreeMap<String, i128>,
    pub constant: i128,
}

impl Linear {
    fn scale(mut self, k: i128) -> Option<Self> {
        for c in self.coeffs.values_mut() {
            *c = c.checked_mul(k)?;
        }
        self.constant = self.constant.checked_mul(k)?;
        Some(self)
    }

    fn add(&self, o: &Linear) -> Linear {
        let mut out = self.clone();
        for (s, c) in &o.coeffs {
            *out.coeffs.entry(s.clone()).or_insert(0) += c;
        }
        out.coeffs.retain(|_, c| *c != 0);
        out.constant += o.constant;
        out
    }

    fn sub(&self, o: &Linear) -> Linear {
        self.add(&o.clone().scale(-1).expect("negation fits"))
    }

    fn as_const(&self) -> Option<i128> {
        self.coeffs.is_empty().then_some(self.constant)
    }
}

/// Linear normal form of an arithmetic expression, if it is linear.
pub fn linearize(e: &SymExpr) -> Option<Linear> {
    match e {
        SymExpr::Const(c) => Some(Linear {
            coeffs: BTreeMap::new(),
            constant: *c,
        }),
        SymExpr::Sym { name, .. } => Some(Linear {
            coeffs: BTreeMap::from([(name.clone(), 1)]),
            constant: 0,
        }),
        SymExpr::Arith(op, a, b) => {
            let (x, y) = (linearize(a)?, linearize(b)?);
            match op {
                ArithOp::Add => Some(x.add(&y)),
                ArithOp::Sub => Some(x.sub(&y)),
                ArithOp::Mul => match (x.as_const(), y.as_const()) {
                    (Some(k), _) => y.scale(k),
                    (_, Some(k)) => x.scale(k),
                    _ => None,
                },
                ArithOp::Shl => {
                    let k = y.as_const()?;
                    if !(0..=64).contains(&k) {
                        return None;
                    }
                    x.scale(1i128 << k)
                }
                ArithOp::Div => None,
            }
        }
        _ => None,
    }
}

/// Splits a formula into conjuncts, pushing negations inward where that
/// exposes more conjuncts.
fn flatten(e: &SymExpr, positive: bool, out: &mut Vec<SymExpr>) {
    match (e, positive) {
        (SymExpr::And(a, b), true) | (SymExpr::Or(a, b), false) => {
            flatten(a, positive, out);
            flatten(b, positive, out);
        }
        (SymExpr::Not(a), p) => flatten(a, !p, out),
        (SymExpr::Cmp(op, a, b), false) => {
            out.push(SymExpr::Cmp(op.negate(), a.clone(), b.clone()))
        }
        (e, true) => out.push(e.clone()),
        (e, false) => out.push(SymExpr::not(e.clone())),
    }
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

/// Tightens bounds from `lin op 0` atoms to a fixpoint. False when some
/// bound becomes empty, which proves the conjunction unsatisfiable.
fn propagate(atoms: &[(Linear, CmpOp)], bounds: &mut BTreeMap<String, (i128, i128)>) -> bool {
    // Every atom as `sum <= limit`.
    let mut rows: Vec<(Vec<(String, i128)>, i128)> = Vec::new();
    for (lin, op) in atoms {
        let terms: Vec<(String, i128)> = lin.coeffs.iter().map(|(s, c)| (s.clone(), *c)).collect();
        let neg: Vec<(String, i128)> = terms.iter().map(|(s, c)| (s.clone(), -c)).collect();
        let k = lin.constant;
        match op {
            CmpOp::Le => rows.push((terms, -k)),
            CmpOp::Lt => rows.push((terms, -k - 1)),
            CmpOp::Ge => rows.push((neg, k)),
            CmpOp::Gt => rows.push((neg, k - 1)),
            CmpOp::Eq => {
                rows.push((terms, -k));
                rows.push((neg, k));
            }
            CmpOp::Ne => {}
        }
    }
    for _ in 0..64 {
        let mut changed = false;
        for (terms, limit) in &rows {
            let min_of = |s: &str, c: i128, b: &BTreeMap<String, (i128, i128)>| {
                let (lo, hi) = b[s];
                if c > 0 {
                    c * lo
                } else {
                    c * hi
                }
            };
            let total_min: i128 = terms.iter().map(|(s, c)| min_of(s, *c, bounds)).sum();
            if total_min > *limit {
                return false;
            }
            for (s, c) in terms {
                let rest = total_min - min_of(s, *c, bounds);
                let room = limit - rest;
                let (lo, hi) = bounds[s];
                let (nlo, nhi) = if *c > 0 {
                    (lo, hi.min(div_floor(room, *c)))
                } else {
                    (lo.max(div_ceil(room, *c)), hi)
                };
                if nlo > nhi {
                    return false;
                }
                if (nlo, nhi) != (lo, hi) {
                    bounds.insert(s.clone(), (nlo, nhi));
                    changed = true;
                }
            }
            if changed {
                break;
            }
        }
        if !changed {
            return true;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: &str, w: u32) -> SymExpr {
        SymExpr::sym(n, w)
    }

    #[test]
    fn linear_form_of_shifted_concat() {
        // (D * 16 + Vd) + inc + inc
        let e = SymExpr::arith(
            ArithOp::Add,
            SymExpr::arith(
                ArithOp::Add,
                SymExpr::arith(
                    ArithOp::Add,
                    SymExpr::arith(ArithOp::Mul, sym("D", 1), SymExpr::Const(16)),
                    sym("Vd", 4),
                ),
                sym("inc", 2),
            ),
            sym("inc", 2),
        );
        let l = linearize(&e).unwrap();
        assert_eq!(
            l.coeffs,
            BTreeMap::from([("D".into(), 16), ("Vd".into(), 1), ("inc".into(), 2)])
        );
        assert_eq!(l.constant, 0);
        let shl = SymExpr::arith(ArithOp::Shl, sym("x", 3), SymExpr::Const(2));
        assert_eq!(linearize(&shl).unwrap().coeffs["x"], 4);
        let nonlin = SymExpr::arith(ArithOp::Mul, sym("x", 3), sym("y", 3));
        assert!(linearize(&nonlin).is_none());
    }

    #[test]
    fn floor_and_ceil_division() {
        assert_eq!(div_floor(7, 2), 3);
        assert_eq!(div_floor(-7, 2), -4);
        assert_eq!(div_ceil(7, 2), 4);
        assert_eq!(div_ceil(-7, 2), -3);
        assert_eq!(div_ceil(7, -2), -3);
    }

    #[test]
    fn propagation_proves_empty_range() {
        let x = Linear {
            coeffs: BTreeMap::from([("x".into(), 1)]),
            constant: -300,
        };
        let mut b = BTreeMap::from([("x".to_string(), (0, 255))]);
        assert!(!propagate(&[(x.clone(), CmpOp::Gt)], &mut b));
        let mut b = BTreeMap::from([("x".to_string(), (0, 1023))]);
        assert!(propagate(&[(x, CmpOp::Ge)], &mut b));
        assert_eq!(b["x"], (300, 1023));
    }
}
