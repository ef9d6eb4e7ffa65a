// SPDX-License-Identifier: Apache-2.0

//! Campaign aggregates: per-category stream, encoding and instruction
//! counts with percentages over everything generated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::{read_journal, CampaignError, JournalHeader, StreamRecord};
use super::compare::{BehaviorCategory, FilterReason, RootCause, Verdict};

fn pct(n: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        100.0 * n as f64 / of as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub label: String,
    /// `None` on the total row.
    pub category: Option<BehaviorCategory>,
    pub streams: usize,
    pub streams_pct: f64,
    pub encodings: usize,
    pub encodings_pct: f64,
    pub instructions: usize,
    pub instructions_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub backend_e: String,
    pub backend_r: String,
    /// Denominators: streams in the campaign, encodings and instructions in
    /// the corpus.
    pub total_streams: usize,
    pub total_encodings: usize,
    pub total_instructions: usize,
    /// Streams with a journal record.
    pub recorded: usize,
    pub filtered_sp_fp: usize,
    pub filtered_branch: usize,
    pub consistent: usize,
    /// One row per category, then a total row.
    pub rows: Vec<CategoryRow>,
    pub root_causes: BTreeMap<RootCause, usize>,
}

impl CampaignReport {
    pub fn from_records(header: &JournalHeader, records: &[StreamRecord]) -> Self {
        let row = |label: &str, category, picked: Vec<&StreamRecord>| {
            let encodings: BTreeSet<_> = picked.iter().map(|r| r.encoding_id.as_str()).collect();
            let instructions: BTreeSet<_> = picked.iter().map(|r| r.instruction.as_str()).collect();
            CategoryRow {
                label: label.to_string(),
                category,
                streams: picked.len(),
                streams_pct: pct(picked.len(), header.streams),
                encodings: encodings.len(),
                encodings_pct: pct(encodings.len(), header.encodings),
                instructions: instructions.len(),
                instructions_pct: pct(instructions.len(), header.instructions),
            }
        };
        let mut rows: Vec<CategoryRow> = BehaviorCategory::ALL
            .iter()
            .map(|&c| {
                let picked = records
                    .iter()
                    .filter(|r| r.verdict() == Verdict::Inconsistent(c))
                    .collect();
                row(c.label(), Some(c), picked)
            })
            .collect();
        let inconsistent = records
            .iter()
            .filter(|r| matches!(r.verdict(), Verdict::Inconsistent(_)))
            .collect();
        rows.push(row("Total", None, inconsistent));

        let count = |v: Verdict| records.iter().filter(|r| r.verdict() == v).count();
        let mut root_causes = BTreeMap::new();
        for rc in records.iter().filter_map(|r| r.root_cause) {
            *root_causes.entry(rc).or_insert(0) += 1;
        }
        Self {
            seed: header.seed,
            backend_e: header.backend_e.clone(),
            backend_r: header.backend_r.clone(),
            total_streams: header.streams,
            total_encodings: header.encodings,
            total_instructions: header.instructions,
            recorded: records.len(),
            filtered_sp_fp: count(Verdict::Filtered(FilterReason::SpFpAccess)),
            filtered_branch: count(Verdict::Filtered(FilterReason::BranchNormal)),
            consistent: count(Verdict::Consistent),
            rows,
            root_causes,
        }
    }

    /// Builds the report from a journal file. An empty file gives a zeroed
    /// report.
    pub fn from_journal(path: &Path) -> Result<Self, CampaignError> {
        let journal = read_journal(path)?;
        Ok(Self::from_records(&journal.header, &journal.records))
    }

    pub fn category(&self, c: BehaviorCategory) -> &CategoryRow {
        self.rows
            .iter()
            .find(|r| r.category == Some(c))
            .expect("every category has a row")
    }

    pub fn total(&self) -> &CategoryRow {
        self.rows.last().expect("total row")
    }

    pub fn root_cause(&self, rc: RootCause) -> usize {
        self.root_causes.get(&rc).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "seed={}  E={}  R={}",
            self.seed, self.backend_e, self.backend_r
        )
        .unwrap();
        writeln!(
            s,
            "streams {}  encodings {}  instructions {}  recorded {}",
            self.total_streams, self.total_encodings, self.total_instructions, self.recorded
        )
        .unwrap();
        writeln!(
            s,
            "filtered: sp/fp {}  branch {}   consistent {}",
            self.filtered_sp_fp, self.filtered_branch, self.consistent
        )
        .unwrap();
        writeln!(s).unwrap();
        writeln!(
            s,
            "{:<22} {:>18} {:>16} {:>16}",
            "Behavior", "Streams", "Encodings", "Instructions"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:<22} {:>9} ({:>5.1}%) {:>7} ({:>5.1}%) {:>7} ({:>5.1}%)",
                r.label,
                r.streams,
                r.streams_pct,
                r.encodings,
                r.encodings_pct,
                r.instructions,
                r.instructions_pct
            )
            .unwrap();
        }
        if !self.root_causes.is_empty() {
            writeln!(s).unwrap();
            writeln!(s, "Root causes").unwrap();
            for (rc, n) in &self.root_causes {
                writeln!(s, "  {:<18} {n}", format!("{rc:?}")).unwrap();
            }
        }
        s
    }
}
