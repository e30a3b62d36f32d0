//! Command-line orchestration: query solvers into a response cache, evaluate
//! every solver group from that cache, consult on a single case, and run the
//! synthetic trend simulation.
//!
//! Commands are plain functions over a [`Runtime`] so tests can inject the
//! environment, the HTTP transport and the output stream.

pub mod commands;
pub mod manifest;

mod files;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cidx_core::corpus::{demo_lexicon_text, CorpusError};
use cidx_core::evaluate::EvalError;
use cidx_core::normalize::LexiconError;
use cidx_core::simulate::SimulationError;
use cidx_core::solvers::roster::load_roster;
use cidx_core::solvers::{HttpTransport, RetryPolicy, Roster, RosterError};
use cidx_core::{Corpus, SynonymTable, TopK};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use files::sha256_hex;
use manifest::{InputRecord, RunManifest, SolverRecord, BUILTIN_PREFIX};

#[derive(Debug, Parser)]
#[command(name = "cidx", version, about = "Pool ranked differentials from several solvers and measure group accuracy")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Case corpus (JSON lines). Defaults to the bundled 20-case demo corpus.
    #[arg(long, global = true, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Solver roster (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub roster: Option<PathBuf>,
    /// Synonym lexicon (TOML). Defaults to the demo lexicon with the demo
    /// corpus, otherwise to the built-in stopword and affix lists only.
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR", default_value = "cidx-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, global = true, value_name = "DIR", default_value = "cidx-out")]
    pub out_dir: PathBuf,
    /// TOP-k cutoff (1, 3 or 5). Repeatable; defaults to all three.
    #[arg(long = "k", global = true, value_name = "K", value_parser = parse_k)]
    pub k: Vec<TopK>,
    /// Overrides the seed of every synthetic solver (or the simulation base seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum concurrent solver requests.
    #[arg(long, global = true, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
    pub concurrency: u16,
}

fn parse_k(s: &str) -> Result<TopK, String> {
    let n: u32 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    TopK::try_from(n).map_err(|e| e.to_string())
}

impl GlobalArgs {
    /// Requested cutoffs, ascending and deduplicated.
    pub fn ks(&self) -> Vec<TopK> {
        let mut ks = if self.k.is_empty() { TopK::ALL.to_vec() } else { self.k.clone() };
        ks.sort();
        ks.dedup();
        ks
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the response cache for every (solver, case) pair not yet cached.
    Query,
    /// Score every solver group from the cache and write reports.
    Evaluate,
    /// Ask every solver about one case and print the pooled differential.
    Consult {
        /// Plain-text case description.
        case_file: PathBuf,
        /// Identifier used for cache lookups by replay solvers. Defaults to the file stem.
        #[arg(long)]
        case_id: Option<String>,
    },
    /// Run the synthetic group-size trend simulation.
    Simulate {
        /// Simulation config (TOML). Defaults to four solvers, 200 cases, 100 seeds.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Roster(#[from] RosterError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("incomplete data: {} (solver, case) pair(s) have no usable cached response:\n{}", .missing.len(), format_pairs(.missing))]
    Incomplete { missing: Vec<(String, String)> },
    #[error("{} request(s) failed:\n{}", .failures.len(), .failures.join("\n"))]
    Transport { failures: Vec<String> },
    #[error(transparent)]
    Eval(EvalError),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(s, c)| format!("  {s}\t{c}")).collect::<Vec<_>>().join("\n")
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Missing { solver, case_id } => CliError::Incomplete { missing: vec![(solver, case_id)] },
            other => CliError::Eval(other),
        }
    }
}

impl CliError {
    /// 1 usage or configuration, 2 incomplete data, 3 transport failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Incomplete { .. } => 2,
            CliError::Transport { .. } => 3,
            _ => 1,
        }
    }
}

/// Process-level dependencies of every command.
pub struct Runtime<'a> {
    /// Environment lookup; used only for credentials.
    pub env: &'a dyn Fn(&str) -> Option<String>,
    pub transport: Arc<dyn HttpTransport>,
    pub retry: RetryPolicy,
    pub out: &'a mut dyn Write,
}

impl Runtime<'_> {
    fn say(&mut self, text: impl AsRef<str>) -> Result<(), CliError> {
        self.out.write_all(text.as_ref().as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
    }
}

pub fn run(cli: &Cli, rt: &mut Runtime<'_>) -> Result<(), CliError> {
    match &cli.command {
        Command::Query => commands::query::cmd_query(&cli.global, rt).map(|_| ()),
        Command::Evaluate => commands::evaluate::cmd_evaluate(&cli.global, rt).map(|_| ()),
        Command::Consult { case_file, case_id } => commands::consult::cmd_consult(&cli.global, case_file, case_id.as_deref(), rt),
        Command::Simulate { config } => commands::simulate::cmd_simulate(&cli.global, config.as_deref(), rt).map(|_| ()),
    }
}

/// Loaded inputs plus their provenance records.
pub(crate) struct Inputs {
    pub corpus: Corpus,
    pub corpus_record: InputRecord,
    pub table: SynonymTable,
    pub lexicon_record: Option<InputRecord>,
    pub roster: Roster,
    pub roster_record: InputRecord,
}

fn record(path: &Path, bytes: &[u8]) -> InputRecord {
    InputRecord { path: path.display().to_string(), sha256: sha256_hex(bytes) }
}

fn builtin(name: &str, bytes: &[u8]) -> InputRecord {
    InputRecord { path: format!("{BUILTIN_PREFIX}{name}"), sha256: sha256_hex(bytes) }
}

pub(crate) fn load_corpus(g: &GlobalArgs) -> Result<(Corpus, InputRecord), CliError> {
    match &g.corpus {
        Some(path) => {
            let text = files::read_to_string(path)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let corpus = Corpus::parse(name, path.display().to_string(), &text)?;
            Ok((corpus, record(path, text.as_bytes())))
        }
        None => Ok((Corpus::demo(), builtin("demo-corpus", Corpus::demo_text().as_bytes()))),
    }
}

pub(crate) fn load_lexicon(g: &GlobalArgs, demo_corpus: bool) -> Result<(SynonymTable, Option<InputRecord>), CliError> {
    match &g.lexicon {
        Some(path) => {
            let text = files::read_to_string(path)?;
            Ok((SynonymTable::parse(&text)?, Some(record(path, text.as_bytes()))))
        }
        None if demo_corpus => {
            Ok((SynonymTable::parse(demo_lexicon_text())?, Some(builtin("demo-lexicon", demo_lexicon_text().as_bytes()))))
        }
        None => Ok((SynonymTable::default(), None)),
    }
}

pub(crate) fn load_roster_arg(g: &GlobalArgs) -> Result<(Roster, InputRecord), CliError> {
    let path = g.roster.as_ref().ok_or_else(|| CliError::Usage("this command needs --roster <FILE>".into()))?;
    let text = files::read_to_string(path)?;
    let mut roster = load_roster(path)?;
    if let Some(seed) = g.seed {
        for entry in &mut roster.solvers {
            if let cidx_core::solvers::roster::SolverConfig::Synthetic { seed: s, .. } = &mut entry.config {
                *s = seed;
            }
        }
    }
    Ok((roster, record(path, text.as_bytes())))
}

impl Inputs {
    pub(crate) fn load(g: &GlobalArgs) -> Result<Self, CliError> {
        let (corpus, corpus_record) = load_corpus(g)?;
        let (table, lexicon_record) = load_lexicon(g, g.corpus.is_none())?;
        let (roster, roster_record) = load_roster_arg(g)?;
        Ok(Inputs { corpus, corpus_record, table, lexicon_record, roster, roster_record })
    }

    /// A manifest pre-filled with every input of this run.
    pub(crate) fn manifest(&self, command: &str, started_at: String, g: &GlobalArgs) -> RunManifest {
        let mut m = RunManifest::new(command, started_at);
        m.corpus = Some(self.corpus_record.clone());
        m.roster = Some(self.roster_record.clone());
        m.lexicon = self.lexicon_record.clone();
        m.lexicon_version = Some(self.table.version().to_string());
        m.solvers = solver_records(&self.roster);
        m.seeds = m.solvers.iter().filter_map(|s| s.seed).collect();
        m.seeds.sort();
        m.seeds.dedup();
        m.k = g.ks().iter().map(|k| k.get() as u32).collect();
        m.settings.insert("cache_dir".into(), g.cache_dir.display().to_string().into());
        m.settings.insert("concurrency".into(), g.concurrency.into());
        m
    }
}

pub(crate) fn solver_records(roster: &Roster) -> Vec<SolverRecord> {
    roster
        .solvers
        .iter()
        .map(|e| SolverRecord {
            name: e.name.clone(),
            kind: e.kind().to_string(),
            params: e.request_params(),
            seed: e.synthetic_model().map(|m| m.seed),
        })
        .collect()
}

pub(crate) fn write_manifest(manifest: RunManifest, out_dir: &Path, command: &str) -> Result<PathBuf, CliError> {
    manifest.write(&out_dir.join(manifest_file_name(command)))
}

pub fn manifest_file_name(command: &str) -> String {
    format!("manifest-{command}.json")
}
