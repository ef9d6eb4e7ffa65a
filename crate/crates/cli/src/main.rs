// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isadiff_cli::{cmd_annotate, cmd_diff, cmd_generate, cmd_report, CliError, Config, IsetFilter};

#[derive(Parser, Debug)]
#[command(
    name = "isadiff",
    version,
    about = "Generate instruction streams from ISA specifications and diff their execution on two backends"
)]
struct Cli {
    /// key=value file with defaults for the options below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate instruction streams and print coverage per instruction set.
    Generate {
        #[command(flatten)]
        common: Common,
        /// A64, A32, T32, T16 or all.
        #[arg(long)]
        iset: Option<IsetFilter>,
        /// Only this encoding.
        #[arg(long)]
        encoding: Option<String>,
        /// Replacement initial sets, `<encoding>.<field>=<bits>,...` per line.
        #[arg(long)]
        init_overrides: Option<PathBuf>,
        /// Stream file path (default `<output-dir>/streams.tsv`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Recompute and check the decode tag of every stream.
    Annotate {
        #[command(flatten)]
        common: Common,
        streams: PathBuf,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every stream on two backends and classify the differences.
    Diff {
        #[command(flatten)]
        common: Common,
        streams: PathBuf,
        /// `replay:<dir>` or `process:<command template>`.
        #[arg(long)]
        backend_e: Option<String>,
        #[arg(long)]
        backend_r: Option<String>,
        /// Per-stream timeout in seconds.
        #[arg(long)]
        timeout: Option<u64>,
        /// Journal path (default `<output-dir>/journal.jsonl`).
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Skip streams already in the journal.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        json: bool,
    },
    /// Print the report for a campaign journal.
    Report {
        journal: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn apply(config: &mut Config, c: &Common) {
    if let Some(p) = &c.corpus {
        config.corpus = p.clone();
    }
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(d) = &c.output_dir {
        config.output_dir = d.clone();
    }
    if let Some(w) = c.workers {
        config.workers = (w > 0).then_some(w);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::default();
    if let Some(path) = &cli.config {
        config.load_file(path)?;
    }
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Generate {
            common,
            iset,
            encoding,
            init_overrides,
            output,
        } => {
            apply(&mut config, &common);
            if let Some(i) = iset {
                config.iset = i;
            }
            config.encoding = encoding.or(config.encoding);
            config.init_overrides = init_overrides.or(config.init_overrides);
            cmd_generate(&config, output.as_deref(), &mut stdout)?;
        }
        Command::Annotate {
            common,
            streams,
            output,
        } => {
            apply(&mut config, &common);
            match output {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|source| CliError::Io {
                        path: p.clone(),
                        source,
                    })?;
                    cmd_annotate(&config, &streams, &mut std::io::BufWriter::new(f))?;
                }
                None => {
                    cmd_annotate(&config, &streams, &mut stdout)?;
                }
            }
        }
        Command::Diff {
            common,
            streams,
            backend_e,
            backend_r,
            timeout,
            journal,
            resume,
            json,
        } => {
            apply(&mut config, &common);
            config.backend_e = backend_e.or(config.backend_e);
            config.backend_r = backend_r.or(config.backend_r);
            if let Some(t) = timeout {
                config.timeout_secs = t;
            }
            cmd_diff(
                &config,
                &streams,
                journal.as_deref(),
                resume,
                json,
                &mut stdout,
            )?;
        }
        Command::Report { journal, json } => {
            cmd_report(&journal, json, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
