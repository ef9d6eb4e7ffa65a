// SPDX-License-Identifier: Apache-2.0

//! Runs streams on two backends, journals one record per stream and
//! aggregates the verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asl::DecodeTag;
use crate::mutation::InstructionStream;
use crate::spec::InstructionSpec;

use super::backend::{BackendError, ExecutorBackend, InitialStateSpec};
use super::compare::{
    classify_root_cause, judge, prefilter, BehaviorCategory, FilterReason, RootCause,
    StateSchemaError, Verdict,
};
use super::report::CampaignReport;

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub timeout: Duration,
    /// Worker threads; `None` uses one per CPU.
    pub workers: Option<usize>,
    pub seed: u64,
    pub init: InitialStateSpec,
    pub journal: Option<PathBuf>,
    /// Skip streams already recorded in `journal`.
    pub resume: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
            workers: None,
            seed: 42,
            init: InitialStateSpec::default(),
            journal: None,
            resume: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{stream}: {source}")]
    Schema {
        stream: String,
        source: StateSchemaError,
    },
    #[error("stream {word} names unknown encoding `{encoding_id}`")]
    UnknownEncoding { encoding_id: String, word: String },
    #[error("journal {}: line {line}: {msg}", path.display())]
    JournalCorrupt {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("cannot resume: journal was written with seed {journal}, campaign uses {config}")]
    SeedMismatch { journal: u64, config: u64 },
    #[error("journal {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// First journal line: the campaign's seed and the report denominators.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalHeader {
    pub seed: u64,
    pub streams: usize,
    pub encodings: usize,
    pub instructions: usize,
    pub backend_e: String,
    pub backend_r: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Consistent,
    Inconsistent,
    Filtered,
}

/// Outcome for one stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub encoding_id: String,
    pub instruction: String,
    pub iset: String,
    pub word: String,
    pub verdict: VerdictKind,
    pub category: Option<BehaviorCategory>,
    pub filter: Option<FilterReason>,
    pub root_cause: Option<RootCause>,
    pub decode_tag: DecodeTag,
    /// Absent when the stream was filtered before execution.
    pub sig_e: Option<i32>,
    pub sig_r: Option<i32>,
}

impl StreamRecord {
    pub fn verdict(&self) -> Verdict {
        match (self.verdict, self.category, self.filter) {
            (VerdictKind::Inconsistent, Some(c), _) => Verdict::Inconsistent(c),
            (VerdictKind::Filtered, _, Some(f)) => Verdict::Filtered(f),
            _ => Verdict::Consistent,
        }
    }

    fn key(&self) -> (String, String) {
        (self.encoding_id.clone(), self.word.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JournalLine {
    Header(JournalHeader),
    Stream(StreamRecord),
}

/// A parsed journal. `valid_len` is the byte length up to the last
/// complete record; a torn final line is dropped.
#[derive(Clone, Debug, Default)]
pub struct Journal {
    pub header: JournalHeader,
    pub records: Vec<StreamRecord>,
    pub valid_len: u64,
}

pub fn read_journal(path: &Path) -> Result<Journal, CampaignError> {
    let text = std::fs::read_to_string(path).map_err(|source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_journal(&text).map_err(|(line, msg)| CampaignError::JournalCorrupt {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

/// Parses journal text; errors carry the 1-based line number.
pub fn parse_journal(text: &str) -> Result<Journal, (usize, String)> {
    let mut journal = Journal::default();
    let mut seen_header = false;
    let mut offset = 0u64;
    let mut rest = text;
    let mut lineno = 0;
    while !rest.is_empty() {
        lineno += 1;
        let (line, complete) = match rest.find('\n') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        let consumed = line.len() + usize::from(complete);
        rest = &rest[consumed..];
        if line.trim().is_empty() {
            offset += consumed as u64;
            journal.valid_len = offset;
            continue;
        }
        match serde_json::from_str::<JournalLine>(line) {
            Ok(JournalLine::Header(h)) if !seen_header && journal.records.is_empty() => {
                journal.header = h;
                seen_header = true;
            }
            Ok(JournalLine::Header(_)) => return Err((lineno, "unexpected header".into())),
            Ok(JournalLine::Stream(_)) if !seen_header => {
                return Err((lineno, "record before header".into()))
            }
            Ok(JournalLine::Stream(r)) => journal.records.push(r),
            Err(_) if !complete => break,
            Err(e) => return Err((lineno, e.to_string())),
        }
        offset += consumed as u64;
        journal.valid_len = offset;
    }
    Ok(journal)
}

fn stream_label(s: &InstructionStream) -> String {
    format!("{} {}", s.encoding_id, s.hex())
}

/// Runs one stream on both backends and judges it.
pub fn evaluate_stream(
    stream: &InstructionStream,
    spec: &InstructionSpec,
    backend_e: &dyn ExecutorBackend,
    backend_r: &dyn ExecutorBackend,
    config: &CampaignConfig,
) -> Result<StreamRecord, CampaignError> {
    let mut record = StreamRecord {
        encoding_id: stream.encoding_id.clone(),
        instruction: spec.encoding.instruction_name.clone(),
        iset: stream.iset.to_string(),
        word: stream.hex(),
        verdict: VerdictKind::Filtered,
        category: None,
        filter: None,
        root_cause: None,
        decode_tag: stream.decode_tag,
        sig_e: None,
        sig_r: None,
    };
    let provisional = prefilter(stream, spec);
    if provisional == Some(FilterReason::SpFpAccess) {
        record.filter = provisional;
        return Ok(record);
    }
    let e = backend_e.run(stream, &config.init, config.timeout)?;
    let r = backend_r.run(stream, &config.init, config.timeout)?;
    let verdict = judge(provisional, &e, &r).map_err(|source| CampaignError::Schema {
        stream: stream_label(stream),
        source,
    })?;
    record.sig_e = Some(e.sig);
    record.sig_r = Some(r.sig);
    record.root_cause = classify_root_cause(stream, verdict, &e, &r);
    match verdict {
        Verdict::Consistent => record.verdict = VerdictKind::Consistent,
        Verdict::Inconsistent(c) => {
            record.verdict = VerdictKind::Inconsistent;
            record.category = Some(c);
        }
        Verdict::Filtered(f) => record.filter = Some(f),
    }
    Ok(record)
}

enum Sink {
    None,
    File { path: PathBuf, out: BufWriter<File> },
}

impl Sink {
    fn write(&mut self, line: &JournalLine) -> Result<(), CampaignError> {
        let Sink::File { path, out } = self else {
            return Ok(());
        };
        let io = |source| CampaignError::Io {
            path: path.clone(),
            source,
        };
        serde_json::to_writer(&mut *out, line).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
        out.flush().map_err(io)
    }
}

fn open_journal(
    config: &CampaignConfig,
    header: &JournalHeader,
) -> Result<(Sink, Vec<StreamRecord>), CampaignError> {
    let Some(path) = &config.journal else {
        return Ok((Sink::None, Vec::new()));
    };
    let io = |source| CampaignError::Io {
        path: path.clone(),
        source,
    };
    if config.resume && path.exists() {
        let journal = read_journal(path)?;
        let file = OpenOptions::new().write(true).open(path).map_err(io)?;
        file.set_len(journal.valid_len).map_err(io)?;
        let mut sink = Sink::File {
            path: path.clone(),
            out: BufWriter::new(OpenOptions::new().append(true).open(path).map_err(io)?),
        };
        if journal.valid_len == 0 {
            sink.write(&JournalLine::Header(header.clone()))?;
        } else if journal.header.seed != header.seed {
            return Err(CampaignError::SeedMismatch {
                journal: journal.header.seed,
                config: header.seed,
            });
        }
        return Ok((sink, journal.records));
    }
    let mut sink = Sink::File {
        path: path.clone(),
        out: BufWriter::new(File::create(path).map_err(io)?),
    };
    sink.write(&JournalLine::Header(header.clone()))?;
    Ok((sink, Vec::new()))
}

/// Runs every stream on both backends and aggregates the verdicts.
///
/// Records are journaled as they complete. A backend failure stops the
/// campaign; everything recorded up to then stays in the journal and is
/// skipped by a later run with `resume`.
pub fn run_campaign(
    streams: &[InstructionStream],
    specs: &[InstructionSpec],
    backend_e: &dyn ExecutorBackend,
    backend_r: &dyn ExecutorBackend,
    config: &CampaignConfig,
) -> Result<CampaignReport, CampaignError> {
    let by_id: BTreeMap<&str, &InstructionSpec> = specs.iter().map(|s| (s.id(), s)).collect();
    let mut jobs = Vec::with_capacity(streams.len());
    for s in streams {
        let spec =
            by_id
                .get(s.encoding_id.as_str())
                .ok_or_else(|| CampaignError::UnknownEncoding {
                    encoding_id: s.encoding_id.clone(),
                    word: s.hex(),
                })?;
        jobs.push((s, *spec));
    }
    let header = JournalHeader {
        seed: config.seed,
        streams: streams.len(),
        encodings: specs.len(),
        instructions: specs
            .iter()
            .map(|s| s.encoding.instruction_name.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        backend_e: backend_e.name().to_string(),
        backend_r: backend_r.name().to_string(),
    };
    let (mut sink, mut records) = open_journal(config, &header)?;
    let done: BTreeSet<(String, String)> = records.iter().map(StreamRecord::key).collect();
    jobs.retain(|(s, _)| !done.contains(&(s.encoding_id.clone(), s.hex())));
    if !done.is_empty() {
        log::info!("resuming: {} done, {} to run", done.len(), jobs.len());
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<StreamRecord>();
    let (run_result, write_result) = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<Vec<StreamRecord>, CampaignError> {
            let mut fresh = Vec::new();
            for record in rx {
                sink.write(&JournalLine::Stream(record.clone()))?;
                fresh.push(record);
            }
            Ok(fresh)
        });
        let run_result: Result<(), CampaignError> = pool.install(|| {
            jobs.par_iter().try_for_each_with(tx, |tx, (stream, spec)| {
                let record = evaluate_stream(stream, spec, backend_e, backend_r, config)?;
                // A closed channel means the writer failed; its error wins.
                let _ = tx.send(record);
                Ok(())
            })
        });
        (run_result, writer.join().expect("journal writer panicked"))
    });
    let fresh = write_result?;
    run_result?;
    records.extend(fresh);
    Ok(CampaignReport::from_records(&header, &records))
}
