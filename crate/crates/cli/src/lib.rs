// SPDX-License-Identifier: Apache-2.0

//! Batch commands behind the `isadiff` binary: generate streams from a
//! corpus, tag stream files, run a differential campaign and report on it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use isadiff_core::diff::{
    backend_from_descriptor, run_campaign, CampaignConfig, CampaignError, CampaignReport,
};
use isadiff_core::generate::{generate_corpus, summarize, GenerateOptions, SummaryRow};
use isadiff_core::mutation::{
    emit_streams, make_stream, parse_stream_line, read_streams, InitOverrides, InstructionStream,
};
use isadiff_core::spec::{parse_spec_file, InstructionSpec, Iset};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Backend(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Validation(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Backend(_) | CampaignError::Pool(_) => CliError::Backend(e.to_string()),
            CampaignError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which instruction sets to generate for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IsetFilter {
    #[default]
    All,
    Only(Iset),
}

impl std::str::FromStr for IsetFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            Ok(IsetFilter::All)
        } else {
            s.parse().map(IsetFilter::Only)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub corpus: PathBuf,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub backend_e: Option<String>,
    pub backend_r: Option<String>,
    pub timeout_secs: u64,
    /// `None` uses one worker per CPU.
    pub workers: Option<usize>,
    pub iset: IsetFilter,
    pub encoding: Option<String>,
    pub init_overrides: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.txt"),
            seed: 42,
            output_dir: PathBuf::from("."),
            backend_e: None,
            backend_r: None,
            timeout_secs: 5,
            workers: None,
            iset: IsetFilter::All,
            encoding: None,
            init_overrides: None,
        }
    }
}

impl Config {
    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Usage(format!("config: bad {what} `{value}`"));
        match key {
            "corpus" => self.corpus = value.into(),
            "seed" | "rng_seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "output_dir" => self.output_dir = value.into(),
            "backend_e" => self.backend_e = Some(value.into()),
            "backend_r" => self.backend_r = Some(value.into()),
            "timeout" | "timeout_secs" => {
                self.timeout_secs = value.parse().map_err(|_| bad("timeout"))?
            }
            "workers" => {
                let n: usize = value.parse().map_err(|_| bad("worker count"))?;
                self.workers = (n > 0).then_some(n);
            }
            "iset" => self.iset = value.parse().map_err(|_| bad("iset"))?,
            "encoding" => self.encoding = Some(value.into()),
            "init_overrides" => self.init_overrides = Some(value.into()),
            _ => return Err(CliError::Usage(format!("config: unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file over the current settings. Blank lines
    /// and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<InstructionSpec>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_spec_file(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_stream_file(path: &Path) -> Result<(Option<u64>, Vec<InstructionStream>), CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    let sf = read_streams(BufReader::new(f)).map_err(|e| match e {
        isadiff_core::mutation::StreamFileError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        e => CliError::Validation(format!("{}: {e}", path.display())),
    })?;
    Ok((sf.seed, sf.streams))
}

/// Set sizes and stream count for one generated encoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EncodingSummary {
    pub encoding_id: String,
    pub set_sizes: Vec<usize>,
    pub streams: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerateReport {
    pub seed: u64,
    pub streams_path: PathBuf,
    pub streams: usize,
    pub encodings: Vec<EncodingSummary>,
    pub rows: Vec<SummaryRow>,
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<6} {:>9} {:>9} {:>7} {:>5} {:>5} {:>7} {:>5} {:>5} {:>7} {:>7}",
        "ISet", "GIS", "VIS", "VISR", "AE", "CE", "CER", "AI", "CI", "CIR", "Solved"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{:<6} {:>9} {:>9} {:>6.1}% {:>5} {:>5} {:>6.1}% {:>5} {:>5} {:>6.1}% {:>7}",
            r.iset,
            r.gis,
            r.vis,
            r.visr,
            r.ae,
            r.ce,
            r.cer,
            r.ai,
            r.ci,
            r.cir,
            r.solved_constraints
        )
        .unwrap();
    }
    s
}

/// Generates streams for the selected encodings, writes
/// `<output_dir>/streams.tsv` (or `output`) and `<output_dir>/summary.json`,
/// and prints the summary table to `out`.
pub fn cmd_generate(
    config: &Config,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<GenerateReport, CliError> {
    let mut specs = load_corpus(&config.corpus)?;
    if let IsetFilter::Only(iset) = config.iset {
        specs.retain(|s| s.encoding.iset == iset);
    }
    if let Some(id) = &config.encoding {
        specs.retain(|s| s.id() == id);
        if specs.is_empty() {
            return Err(CliError::Validation(format!(
                "encoding `{id}` is not in {} for the selected instruction set",
                config.corpus.display()
            )));
        }
    }
    if specs.is_empty() {
        log::warn!("no encodings selected from {}", config.corpus.display());
    }
    let overrides = match &config.init_overrides {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            let o = InitOverrides::parse(&text).map_err(|e| CliError::Validation(e.to_string()))?;
            let all = load_corpus(&config.corpus)?;
            o.validate(&all)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            o
        }
        None => InitOverrides::default(),
    };
    let opts = GenerateOptions {
        seed: config.seed,
        overrides,
        workers: config.workers,
        ..GenerateOptions::default()
    };
    let outputs =
        generate_corpus(&specs, &opts).map_err(|e| CliError::Validation(e.to_string()))?;
    let streams: Vec<InstructionStream> = outputs
        .iter()
        .flat_map(|o| o.streams.iter().cloned())
        .collect();

    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let streams_path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.join("streams.tsv"));
    let f = File::create(&streams_path).map_err(io_err(&streams_path))?;
    emit_streams(&streams, config.seed, &mut BufWriter::new(f)).map_err(io_err(&streams_path))?;

    let report = GenerateReport {
        seed: config.seed,
        streams_path,
        streams: streams.len(),
        encodings: outputs
            .iter()
            .map(|o| EncodingSummary {
                encoding_id: o.encoding_id.clone(),
                set_sizes: o.sets.iter().map(|s| s.len()).collect(),
                streams: o.streams.len(),
            })
            .collect(),
        rows: summarize(&specs, &outputs),
    };
    let summary_path = config.output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report).expect("summary serializes");
    std::fs::write(&summary_path, json + "\n").map_err(io_err(&summary_path))?;

    let w = |e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    };
    writeln!(
        out,
        "seed {}: {} streams -> {}",
        report.seed,
        report.streams,
        report.streams_path.display()
    )
    .map_err(w)?;
    if let [one] = &report.encodings[..] {
        writeln!(out, "{}: set sizes {:?}", one.encoding_id, one.set_sizes).map_err(w)?;
    }
    out.write_all(render_summary(&report.rows).as_bytes())
        .map_err(w)?;
    Ok(report)
}

/// Recomputes the decode tag and symbol values of every stream in
/// `input` and writes a fully tagged stream file. An existing tag that
/// disagrees with decoding is an error.
pub fn cmd_annotate(config: &Config, input: &Path, out: &mut dyn Write) -> Result<usize, CliError> {
    let specs = load_corpus(&config.corpus)?;
    let by_id: BTreeMap<&str, &InstructionSpec> = specs.iter().map(|s| (s.id(), s)).collect();
    let f = File::open(input).map_err(io_err(input))?;
    let mut seed = None;
    let mut streams = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(input))?;
        let at =
            |msg: String| CliError::Validation(format!("{}:{}: {msg}", input.display(), i + 1));
        if let Some(h) = line.strip_prefix('#') {
            seed = seed.or_else(|| {
                h.split_whitespace()
                    .find_map(|t| t.strip_prefix("seed=")?.parse().ok())
            });
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (s, tagged) = parse_stream_line(&line).map_err(at)?;
        let spec = by_id
            .get(s.encoding_id.as_str())
            .ok_or_else(|| at(format!("unknown encoding `{}`", s.encoding_id)))?;
        let fields = spec
            .encoding
            .decode_word(s.word)
            .ok_or_else(|| at(format!("{} does not match {}", s.hex(), s.encoding_id)))?;
        let assignment = spec
            .encoding
            .symbol_fields()
            .filter_map(|f| {
                let n = f.symbol_name()?;
                Some((n.to_string(), fields[n].value()))
            })
            .collect();
        let fresh = make_stream(spec, assignment).map_err(|e| at(e.to_string()))?;
        if tagged && fresh.decode_tag != s.decode_tag {
            return Err(at(format!(
                "{} is tagged {} but decodes as {}",
                s.hex(),
                s.decode_tag,
                fresh.decode_tag
            )));
        }
        streams.push(fresh);
    }
    let w = io_err(Path::new("<output>"));
    emit_streams(&streams, seed.unwrap_or(config.seed), &mut &mut *out).map_err(w)
}

/// Runs both backends over a stream file, journals the verdicts and prints
/// the report. The report is also written to `<output_dir>/report.json`.
pub fn cmd_diff(
    config: &Config,
    streams_path: &Path,
    journal: Option<&Path>,
    resume: bool,
    json: bool,
    out: &mut dyn Write,
) -> Result<CampaignReport, CliError> {
    let specs = load_corpus(&config.corpus)?;
    let (file_seed, streams) = read_stream_file(streams_path)?;
    let descriptor = |d: &Option<String>, side: &str| {
        d.clone()
            .ok_or_else(|| CliError::Usage(format!("missing --backend-{side}")))
    };
    let backend_e = backend_from_descriptor("E", &descriptor(&config.backend_e, "e")?)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let backend_r = backend_from_descriptor("R", &descriptor(&config.backend_r, "r")?)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let journal = journal
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.join("journal.jsonl"));
    let campaign = CampaignConfig {
        timeout: Duration::from_secs(config.timeout_secs),
        workers: config.workers,
        seed: file_seed.unwrap_or(config.seed),
        journal: Some(journal),
        resume,
        ..CampaignConfig::default()
    };
    let report = run_campaign(&streams, &specs, &*backend_e, &*backend_r, &campaign)?;
    let report_path = config.output_dir.join("report.json");
    std::fs::write(&report_path, report.to_json() + "\n").map_err(io_err(&report_path))?;
    print_report(&report, json, out)?;
    Ok(report)
}

fn print_report(report: &CampaignReport, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let text = if json {
        report.to_json() + "\n"
    } else {
        report.render_table()
    };
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

/// Rebuilds the report from a campaign journal.
pub fn cmd_report(
    journal: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<CampaignReport, CliError> {
    let report = CampaignReport::from_journal(journal)?;
    print_report(&report, json, out)?;
    Ok(report)
}
