//! Sources of ranked differentials.
//!
//! A solver answers one case with up to five ranked diagnoses. Three backend
//! kinds exist:
//! - `live`: an LLM reached over HTTP, with write-through caching
//! - `replay`: previously cached raw responses, never touches the network
//! - `synthetic`: a seeded stochastic model for desk-scale experiments
//!
//! All of them produce raw text; [`parse_response`] turns raw text into a
//! [`Differential`].

pub mod cache;
pub mod live;
pub mod roster;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CaseVignette;
use crate::normalize::{NormalizedDiagnosis, SynonymTable};
use crate::score::Rank;

pub use cache::{CacheMetadata, ResponseCache};
pub use live::{
    HttpReply, HttpTransport, InFlightLimit, LiveBackend, Provider, ProviderLimits, RetryPolicy, TransportFault, UreqTransport,
};
pub use roster::{Roster, RosterEntry, RosterError};
pub use synthetic::{synthetic_answer, HitRankDistribution, SyntheticBackend, SyntheticSolverModel};

/// Maximum number of diagnoses kept in a differential.
pub const MAX_DIFFERENTIAL_LEN: usize = 5;

/// Stripped lines longer than this are treated as prose.
pub const PROSE_LINE_MAX_CHARS: usize = 80;

const PROMPT_SUFFIX: &str = " What is the differential (list format of common shorthand non-abbreviated diagnoses) for the above case? Respond with ONLY diagnosis names (one per line) up to a max of 5.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Live,
    Replay,
    Synthetic,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Live => "live",
            SolverKind::Replay => "replay",
            SolverKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverIdError {
    #[error("solver name is empty")]
    Empty,
    #[error("solver name {0:?} contains whitespace")]
    Whitespace(String),
    #[error("solver name {0:?} contains a path separator")]
    PathSeparator(String),
}

/// Roster-unique solver label. Used in file paths and report columns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SolverId {
    name: String,
    kind: SolverKind,
}

impl SolverId {
    pub fn new(name: impl Into<String>, kind: SolverKind) -> Result<Self, SolverIdError> {
        let name = name.into();
        if name.is_empty() {
            return Err(SolverIdError::Empty);
        }
        if name.chars().any(char::is_whitespace) {
            return Err(SolverIdError::Whitespace(name));
        }
        if name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(SolverIdError::PathSeparator(name));
        }
        Ok(SolverId { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ranked diagnoses from one solver for one case. Entry `i` has rank `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Differential {
    solver: SolverId,
    case_id: String,
    entries: Vec<NormalizedDiagnosis>,
    raw_response: String,
}

impl Differential {
    /// Drops empty terms, collapses duplicates (first occurrence wins) and
    /// truncates to five. Returns `None` if nothing usable remains.
    pub fn from_entries(
        solver: SolverId,
        case_id: impl Into<String>,
        entries: impl IntoIterator<Item = NormalizedDiagnosis>,
        raw_response: impl Into<String>,
    ) -> Option<Self> {
        let mut seen = HashSet::new();
        let entries: Vec<NormalizedDiagnosis> = entries
            .into_iter()
            .filter(|e| !e.term.is_empty())
            .filter(|e| seen.insert(e.term.clone()))
            .take(MAX_DIFFERENTIAL_LEN)
            .collect();
        if entries.is_empty() {
            return None;
        }
        Some(Differential { solver, case_id: case_id.into(), entries, raw_response: raw_response.into() })
    }

    pub fn solver(&self) -> &SolverId {
        &self.solver
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn entries(&self) -> &[NormalizedDiagnosis] {
        &self.entries
    }

    pub fn raw_response(&self) -> &str {
        &self.raw_response
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    pub fn ranked(&self) -> impl Iterator<Item = (Rank, &NormalizedDiagnosis)> {
        self.entries.iter().enumerate().map(|(i, e)| (Rank::from_index(i), e))
    }
}

/// A response with no usable diagnosis lines.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("solver {solver} gave no usable diagnoses for case {case_id}")]
pub struct ParseFailure {
    pub solver: SolverId,
    pub case_id: String,
    pub raw_response: String,
}

/// What a solver produced for a case after parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Parsed(Differential),
    Failed(ParseFailure),
}

impl Answer {
    pub fn differential(&self) -> Option<&Differential> {
        match self {
            Answer::Parsed(d) => Some(d),
            Answer::Failed(_) => None,
        }
    }
}

impl From<Result<Differential, ParseFailure>> for Answer {
    fn from(r: Result<Differential, ParseFailure>) -> Self {
        match r {
            Ok(d) => Answer::Parsed(d),
            Err(f) => Answer::Failed(f),
        }
    }
}

/// The canonical query text for a case. Tags and ground truth are never used.
pub fn build_prompt(case: &CaseVignette) -> String {
    prompt_for_text(&case.vignette_text)
}

/// Template applied to free case text.
pub fn prompt_for_text(case_text: &str) -> String {
    let mut prompt = String::with_capacity(case_text.len() + PROMPT_SUFFIX.len());
    prompt.push_str(case_text);
    prompt.push_str(PROMPT_SUFFIX);
    prompt
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+\s*[.)]|[-*•])\s*").expect("valid regex"))
}

fn is_prose(line: &str) -> bool {
    line.chars().count() > PROSE_LINE_MAX_CHARS || line.contains(". ")
}

/// Extracts the diagnosis-bearing lines of a raw response, in order.
pub fn candidate_lines(raw: &str) -> Vec<&str> {
    raw.lines()
        .map(str::trim)
        .map(|line| match list_marker().find(line) {
            Some(m) => line[m.end()..].trim(),
            None => line,
        })
        .filter(|line| !line.is_empty() && !is_prose(line))
        .collect()
}

/// Parses a raw solver response into a differential.
pub fn parse_response(raw: &str, table: &SynonymTable, solver: &SolverId, case_id: &str) -> Result<Differential, ParseFailure> {
    let entries = candidate_lines(raw).into_iter().map(|line| table.normalize(line));
    Differential::from_entries(solver.clone(), case_id, entries, raw).ok_or_else(|| ParseFailure {
        solver: solver.clone(),
        case_id: case_id.to_string(),
        raw_response: raw.to_string(),
    })
}

/// Renders diagnoses as a numbered list, one per line.
pub fn render_numbered<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    names.into_iter().enumerate().map(|(i, name)| format!("{}. {}\n", i + 1, name)).collect()
}

/// Key-value request parameters, recorded verbatim in cache metadata.
pub type RequestParams = BTreeMap<String, serde_json::Value>;

/// Deterministic decoding defaults.
pub fn default_request_params() -> RequestParams {
    let mut params = RequestParams::new();
    params.insert("temperature".into(), serde_json::json!(0.0));
    params.insert("max_tokens".into(), serde_json::json!(256));
    params
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverRequest {
    pub solver: SolverId,
    pub case_id: String,
    pub prompt: String,
    pub params: RequestParams,
    pub attempt: u32,
}

impl SolverRequest {
    pub fn for_case(solver: &SolverId, case: &CaseVignette, params: RequestParams) -> Self {
        SolverRequest { solver: solver.clone(), case_id: case.case_id.clone(), prompt: build_prompt(case), params, attempt: 1 }
    }
}

/// Raw text returned by a backend plus the number of attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub text: String,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("no cached response for solver {solver}, case {case_id}")]
    CacheMiss { solver: String, case_id: String },
    #[error("cached response for solver {solver}, case {case_id} was produced by a different prompt")]
    PromptMismatch { solver: String, case_id: String },
    #[error("solver {solver}, case {case_id}: {fault} (after {attempts} attempt(s))")]
    Transport { solver: String, case_id: String, attempts: u32, fault: TransportFault },
    #[error("solver {solver}: malformed provider response: {message}")]
    BadPayload { solver: String, message: String },
    #[error("synthetic solver {solver} does not know case {case_id}")]
    UnknownCase { solver: String, case_id: String },
    #[error("synthetic solver {solver}: {message}")]
    Synthetic { solver: String, message: String },
    #[error("cache I/O: {0}")]
    Cache(#[from] cache::CacheError),
}

/// Anything that can answer a [`SolverRequest`] with raw text.
pub trait SolverBackend: Send + Sync {
    fn solver(&self) -> &SolverId;

    fn query(&self, request: &SolverRequest) -> Result<RawResponse, QueryError>;
}

/// Serves previously cached responses. Never touches the network.
pub struct ReplayBackend {
    solver: SolverId,
    cache: ResponseCache,
}

impl ReplayBackend {
    pub fn new(solver: SolverId, cache: ResponseCache) -> Self {
        Self { solver, cache }
    }
}

impl SolverBackend for ReplayBackend {
    fn solver(&self) -> &SolverId {
        &self.solver
    }

    fn query(&self, request: &SolverRequest) -> Result<RawResponse, QueryError> {
        let name = self.solver.name();
        let entry = self
            .cache
            .get(name, &request.case_id)?
            .ok_or_else(|| QueryError::CacheMiss { solver: name.to_string(), case_id: request.case_id.clone() })?;
        if let Some(meta) = &entry.metadata {
            if meta.prompt_sha256 != cache::prompt_hash(&request.prompt) {
                return Err(QueryError::PromptMismatch { solver: name.to_string(), case_id: request.case_id.clone() });
            }
        }
        Ok(RawResponse { text: entry.text, attempts: entry.metadata.map(|m| m.attempts).unwrap_or(1) })
    }
}

/// Free-function form of [`SolverBackend::query`].
pub fn query(backend: &dyn SolverBackend, request: &SolverRequest) -> Result<RawResponse, QueryError> {
    backend.query(request)
}
