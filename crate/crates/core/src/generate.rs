// SPDX-License-Identifier: Apache-2.0

//! Per-encoding generation: constraint extraction and solving, mutation
//! sets, Cartesian product, and the coverage summary.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::asl::eval::EvalError;
use crate::asl::slice::slice_vars;
use crate::asl::{extract_constraints, symbolize, Polarity};
use crate::mutation::{
    build_mutation_sets, cartesian_generate, InitOverrides, InstructionStream, MappingError,
    MutationSet, SolvedConstraint,
};
use crate::solver::{domains_for, SolveError, Solver};
use crate::spec::{InstructionSpec, Iset};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("{encoding_id}: {source}")]
    Mapping {
        encoding_id: String,
        source: MappingError,
    },
    #[error("{encoding_id}: decode evaluation failed: {source}")]
    Eval {
        encoding_id: String,
        source: EvalError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Constraint bookkeeping for one encoding.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintStats {
    /// Distinct branch conditions found (one per polarity pair).
    pub extracted: usize,
    /// Conditions that could not be expressed over encoding symbols.
    pub unsymbolizable: usize,
    /// Distinct symbolized conditions.
    pub symbolized: usize,
    /// Symbolized conditions decided for both polarities.
    pub solved: usize,
    /// Symbolized conditions where the solver gave up.
    pub unsolved: usize,
    /// Witnesses found (at most two per condition).
    pub witnesses: usize,
}

/// Extracts, symbolizes and solves every branch condition of an encoding's
/// decode and execute pseudocode.
pub fn solve_constraints(
    spec: &InstructionSpec,
    solver: &Solver,
) -> (Vec<SolvedConstraint>, ConstraintStats) {
    let ast = spec.combined_ast();
    let widths = spec.encoding.symbol_widths();
    let mut stats = ConstraintStats::default();
    let mut out: Vec<SolvedConstraint> = Vec::new();
    for c in extract_constraints(&ast) {
        if c.polarity != Polarity::Assert {
            continue;
        }
        stats.extracted += 1;
        let vars: BTreeSet<String> = c
            .source
            .vars()
            .into_iter()
            .chain(c.path_source.iter().flat_map(|p| p.vars()))
            .map(String::from)
            .collect();
        let slice = slice_vars(&ast, vars, Some(c.site));
        let sym = match symbolize(&slice, &c, &widths) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("{}: skipping `{}`: {e}", spec.id(), c.source);
                stats.unsymbolizable += 1;
                continue;
            }
        };
        if out.iter().any(|o| {
            o.constraint.expr == sym.expr
                && o.constraint.path_condition == sym.path_condition
                && o.constraint.side == sym.side
        }) {
            continue;
        }
        stats.symbolized += 1;
        match solver.solve_both(&sym, &domains_for(&sym)) {
            Ok((assert, negate)) => {
                stats.solved += 1;
                stats.witnesses += assert.is_some() as usize + negate.is_some() as usize;
                out.push(SolvedConstraint {
                    constraint: sym,
                    assert,
                    negate,
                });
            }
            Err(e @ SolveError::Timeout { .. }) => {
                log::warn!("{}: unsolved constraint `{}`: {e}", spec.id(), sym.expr);
                stats.unsolved += 1;
            }
            Err(e) => {
                log::warn!("{}: cannot solve `{}`: {e}", spec.id(), sym.expr);
                stats.unsolved += 1;
            }
        }
    }
    (out, stats)
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub seed: u64,
    pub overrides: InitOverrides,
    pub solver: Solver,
    /// Worker threads; `None` uses one per CPU.
    pub workers: Option<usize>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            overrides: InitOverrides::default(),
            solver: Solver::default(),
            workers: None,
        }
    }
}

/// Everything generated for one encoding.
#[derive(Clone, Debug)]
pub struct EncodingOutput {
    pub encoding_id: String,
    pub iset: Iset,
    pub instruction_name: String,
    pub sets: Vec<MutationSet>,
    pub solved: Vec<SolvedConstraint>,
    pub stats: ConstraintStats,
    pub streams: Vec<InstructionStream>,
}

pub fn generate_encoding(
    spec: &InstructionSpec,
    opts: &GenerateOptions,
) -> Result<EncodingOutput, GenerateError> {
    let (solved, stats) = solve_constraints(spec, &opts.solver);
    let sets =
        build_mutation_sets(spec, &solved, &opts.overrides, opts.seed).map_err(|source| {
            GenerateError::Mapping {
                encoding_id: spec.id().to_string(),
                source,
            }
        })?;
    let streams = cartesian_generate(&sets, spec).map_err(|source| GenerateError::Eval {
        encoding_id: spec.id().to_string(),
        source,
    })?;
    log::info!("{}: {} streams", spec.id(), streams.len());
    Ok(EncodingOutput {
        encoding_id: spec.id().to_string(),
        iset: spec.encoding.iset,
        instruction_name: spec.encoding.instruction_name.clone(),
        sets,
        solved,
        stats,
        streams,
    })
}

/// Generates every encoding in parallel; output keeps corpus order.
pub fn generate_corpus(
    specs: &[InstructionSpec],
    opts: &GenerateOptions,
) -> Result<Vec<EncodingOutput>, GenerateError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| GenerateError::Pool(e.to_string()))?;
    pool.install(|| {
        specs
            .par_iter()
            .map(|s| generate_encoding(s, opts))
            .collect()
    })
}

/// Coverage counts for one instruction set (or the total).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryRow {
    pub iset: String,
    /// Generated instruction streams.
    pub gis: usize,
    /// Streams matching their encoding's constant bits.
    pub vis: usize,
    pub visr: f64,
    /// All encodings in the corpus.
    pub ae: usize,
    /// Encodings with at least one stream.
    pub ce: usize,
    pub cer: f64,
    /// All instructions (distinct names).
    pub ai: usize,
    pub ci: usize,
    pub cir: f64,
    pub solved_constraints: usize,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Per-iset rows (in A64, A32, T32, T16 order, only isets present) plus a
/// final total row.
pub fn summarize(specs: &[InstructionSpec], outputs: &[EncodingOutput]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut groups: Vec<(String, Vec<Iset>)> = Iset::ALL
        .iter()
        .filter(|i| specs.iter().any(|s| s.encoding.iset == **i))
        .map(|i| (i.to_string(), vec![*i]))
        .collect();
    groups.push(("Total".into(), Iset::ALL.to_vec()));
    for (label, isets) in groups {
        let in_group: Vec<&InstructionSpec> = specs
            .iter()
            .filter(|s| isets.contains(&s.encoding.iset))
            .collect();
        let by_id: BTreeMap<&str, &EncodingOutput> = outputs
            .iter()
            .map(|o| (o.encoding_id.as_str(), o))
            .collect();
        let mut row = SummaryRow {
            iset: label,
            ..SummaryRow::default()
        };
        let mut all_inst = BTreeSet::new();
        let mut covered_inst = BTreeSet::new();
        for s in &in_group {
            row.ae += 1;
            let key = (s.encoding.iset, s.encoding.instruction_name.clone());
            all_inst.insert(key.clone());
            if let Some(o) = by_id.get(s.id()) {
                row.gis += o.streams.len();
                row.vis += o
                    .streams
                    .iter()
                    .filter(|st| s.encoding.matches(st.word))
                    .count();
                row.solved_constraints += o.stats.solved;
                if !o.streams.is_empty() {
                    row.ce += 1;
                    covered_inst.insert(key);
                }
            }
        }
        row.ai = all_inst.len();
        row.ci = covered_inst.len();
        row.visr = pct(row.vis, row.gis);
        row.cer = pct(row.ce, row.ae);
        row.cir = pct(row.ci, row.ai);
        rows.push(row);
    }
    rows
}
