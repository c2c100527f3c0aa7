//! Command-line front end: `index`, `generate`, `serve`, `simulate`, `evaluate`.
//!
//! Exit codes: 0 success, 2 usage error, 3 bad input data, 4 internal error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, ServiceConfig};
use crate::corpus::{load_corpus, CorpusError, CorpusIndex, FieldKind};
use crate::engine::Engine;
use crate::metrics::{evaluate, EvaluationOptions};
use crate::ranking::Thesaurus;
use crate::session::{read_log, write_log, EventStore, ExperimentArm, TransactionLog};
use crate::simlab::{generate_corpus, run_experiment, ExperimentConfig, SimError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) | SimError::InvalidConfig(_) | SimError::Toml(_) => CliError::Usage(e.to_string()),
            SimError::Corpus(_) | SimError::Io(_) => CliError::Data(e.to_string()),
            SimError::Engine(_) => CliError::Internal(e.to_string()),
        }
    }
}

fn io_err<'a>(what: &'static str, path: &'a std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + 'a {
    move |e| CliError::Data(format!("{what} {}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "cbrowse", version, about = "Contextual stratagem browsing and living-lab evaluation")]
pub struct Cli {
    /// Log filter, e.g. `info` or `cbrowse=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a corpus file and print index statistics and diagnostics.
    Index {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write a synthetic corpus and its topic sidecar.
    Generate {
        /// Experiment config whose `[corpus]` table is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_arm)]
        arm_force: Option<ExperimentArm>,
        /// Transaction log to append to.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Simulate users against the three arms and evaluate the log.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_arm)]
        arm_force: Option<ExperimentArm>,
        /// Where to write the transaction log.
        #[arg(long)]
        log_out: PathBuf,
        /// Where to write the metric report (JSON).
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Compute the metric report from a transaction log.
    Evaluate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add the MFR-by-history table.
        #[arg(long)]
        history_bins: bool,
        #[arg(long)]
        max_rank: Option<usize>,
    },
}

fn parse_arm(s: &str) -> Result<ExperimentArm, String> {
    s.parse().map_err(|e: crate::session::SessionError| e.to_string())
}

fn load_experiment(config: Option<&PathBuf>) -> Result<ExperimentConfig, CliError> {
    match config {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_err("cannot write", p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_index(corpus: &PathBuf) -> Result<(), CliError> {
    let ingested = load_corpus(corpus)?;
    for d in &ingested.diagnostics {
        eprintln!("{}:{}: {}", corpus.display(), d.line, d.message);
    }
    let index = &ingested.index;
    println!("documents: {}", index.doc_count());
    println!("skipped lines: {}", ingested.diagnostics.len());
    for field in FieldKind::ALL {
        println!("{:<14} {:>8} terms", field.as_str(), index.term_count(field));
    }
    Ok(())
}

fn cmd_serve(
    config: Option<&PathBuf>,
    corpus: Option<PathBuf>,
    port: Option<u16>,
    seed: Option<u64>,
    arm_force: Option<ExperimentArm>,
    log: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    cfg.corpus = corpus.unwrap_or(cfg.corpus);
    cfg.port = port.unwrap_or(cfg.port);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.arm_force = arm_force.or(cfg.arm_force);
    cfg.log = log.or(cfg.log);

    let ingested = load_corpus(&cfg.corpus)?;
    if !ingested.diagnostics.is_empty() {
        tracing::warn!(skipped = ingested.diagnostics.len(), "corpus lines skipped");
    }
    let thesaurus = match &cfg.thesaurus {
        Some(p) => Thesaurus::load(p).map_err(|e| CliError::Data(e.to_string()))?,
        None => Thesaurus::new(),
    };
    let store = match &cfg.log {
        Some(p) => EventStore::with_log(TransactionLog::create(p).map_err(io_err("cannot open log", p))?),
        None => EventStore::new(),
    };
    let engine = Engine::new(Arc::new(ingested.index), thesaurus, cfg.ranking.clone(), store)
        .with_arm_seed(cfg.seed)
        .with_arm_force(cfg.arm_force);
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(crate::service::serve(Arc::new(engine), &addr))
        .map_err(|e| CliError::Internal(format!("server on {addr}: {e}")))
}

fn cmd_evaluate(
    log: &PathBuf,
    format: ReportFormat,
    out: Option<&PathBuf>,
    history_bins: bool,
    max_rank: Option<usize>,
) -> Result<(), CliError> {
    let file = File::open(log).map_err(io_err("cannot open log", log))?;
    let (events, diagnostics) = read_log(BufReader::new(file)).map_err(io_err("cannot read log", log))?;
    for d in &diagnostics {
        eprintln!("{}:{}: {}", log.display(), d.line, d.message);
    }
    let mut opts = EvaluationOptions::default();
    if let Some(m) = max_rank {
        opts.max_rank = m;
    }
    let report = evaluate(&events, &opts);
    let text = match format {
        ReportFormat::Text => report.render_text(history_bins),
        ReportFormat::Json => {
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))? + "\n"
        }
    };
    write_output(out, &text)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Index { corpus } => cmd_index(&corpus),
        Command::Generate {
            config,
            seed,
            out,
            labels,
        } => {
            let mut spec = load_experiment(config.as_ref())?.corpus;
            spec.seed = seed.unwrap_or(spec.seed);
            let corpus = generate_corpus(&spec)?;
            corpus.write_files(&out, &labels).map_err(io_err("cannot write", &out))?;
            // self-check: the written file must load back cleanly
            let n = CorpusIndex::from_records(corpus.records)?.doc_count();
            eprintln!("wrote {n} documents to {}", out.display());
            Ok(())
        }
        Command::Serve {
            config,
            corpus,
            port,
            seed,
            arm_force,
            log,
        } => cmd_serve(config.as_ref(), corpus, port, seed, arm_force, log),
        Command::Simulate {
            config,
            sessions,
            seed,
            arm_force,
            log_out,
            report_out,
        } => {
            let mut cfg = load_experiment(config.as_ref())?;
            cfg.sessions = sessions.unwrap_or(cfg.sessions);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.arm_force = arm_force.or(cfg.arm_force);
            let out = run_experiment(&cfg)?;
            let file = File::create(&log_out).map_err(io_err("cannot write", &log_out))?;
            write_log(BufWriter::new(file), &out.events).map_err(io_err("cannot write", &log_out))?;
            if let Some(p) = &report_out {
                let json = serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Internal(e.to_string()))?;
                std::fs::write(p, json + "\n").map_err(io_err("cannot write", p))?;
            }
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.report.render_text(true).as_bytes());
            Ok(())
        }
        Command::Evaluate {
            log,
            format,
            out,
            history_bins,
            max_rank,
        } => cmd_evaluate(&log, format, out.as_ref(), history_bins, max_rank),
    }
}
