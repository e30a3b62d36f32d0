//! Case-vignette corpora.
//!
//! The on-disk format is JSON Lines: one case object per line, blank lines
//! and lines starting with `#` ignored. Record order is iteration order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::SynonymTable;

const DEMO_CORPUS: &str = include_str!("../data/demo_corpus.jsonl");
const DEMO_LEXICON: &str = include_str!("../data/demo_lexicon.toml");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}` {problem}")]
    InvalidField { line: usize, field: &'static str, problem: &'static str },
    #[error("line {line}: duplicate case_id {case_id:?}")]
    DuplicateId { line: usize, case_id: String },
    #[error("line {line}: case {case_id:?} has no accepted diagnoses")]
    EmptyAccepted { line: usize, case_id: String },
}

/// One clinical case with its accepted ground-truth terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseVignette {
    pub case_id: String,
    pub vignette_text: String,
    pub accepted_diagnoses: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl CaseVignette {
    pub fn new(case_id: impl Into<String>, vignette_text: impl Into<String>, accepted: Vec<String>) -> Self {
        Self { case_id: case_id.into(), vignette_text: vignette_text.into(), accepted_diagnoses: accepted, tags: Vec::new() }
    }

    /// Normalized accepted terms, empties removed.
    pub fn accepted_terms(&self, table: &SynonymTable) -> Vec<String> {
        let mut terms: Vec<String> = self.accepted_diagnoses.iter().map(|d| table.term(d)).filter(|t| !t.is_empty()).collect();
        terms.sort();
        terms.dedup();
        terms
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub source_note: String,
    pub cases: Vec<CaseVignette>,
}

impl Corpus {
    /// Parses JSON Lines corpus text, validating every record.
    pub fn parse(name: impl Into<String>, source_note: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let mut cases = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || raw_line.starts_with('#') {
                continue;
            }
            let case: CaseVignette =
                serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed { line, message: e.to_string() })?;
            validate_case(&case, line)?;
            if !seen.insert(case.case_id.clone()) {
                return Err(CorpusError::DuplicateId { line, case_id: case.case_id });
            }
            cases.push(case);
        }
        Ok(Corpus { name: name.into(), source_note: source_note.into(), cases })
    }

    /// Builds a corpus from in-memory cases, applying the same validation as
    /// [`Corpus::parse`]. Line numbers in errors are 1-based record indices.
    pub fn from_cases(
        name: impl Into<String>,
        source_note: impl Into<String>,
        cases: Vec<CaseVignette>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (idx, case) in cases.iter().enumerate() {
            validate_case(case, idx + 1)?;
            if !seen.insert(case.case_id.as_str()) {
                return Err(CorpusError::DuplicateId { line: idx + 1, case_id: case.case_id.clone() });
            }
        }
        Ok(Corpus { name: name.into(), source_note: source_note.into(), cases })
    }

    /// The bundled 20-case demo corpus. All vignettes are invented.
    pub fn demo() -> Self {
        Corpus::parse("demo", "bundled demo corpus (fictional cases)", DEMO_CORPUS).expect("bundled demo corpus is valid")
    }

    pub fn demo_text() -> &'static str {
        DEMO_CORPUS
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseVignette> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CaseVignette> {
        self.cases.iter()
    }

    /// Serializes back to the JSON Lines format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            out.push_str(&serde_json::to_string(case).expect("case serializes"));
            out.push('\n');
        }
        out
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CaseVignette;
    type IntoIter = std::slice::Iter<'a, CaseVignette>;

    fn into_iter(self) -> Self::IntoIter {
        self.cases.iter()
    }
}

fn validate_case(case: &CaseVignette, line: usize) -> Result<(), CorpusError> {
    if case.case_id.trim().is_empty() {
        return Err(CorpusError::InvalidField { line, field: "case_id", problem: "is empty" });
    }
    if case.vignette_text.trim().is_empty() {
        return Err(CorpusError::InvalidField { line, field: "vignette_text", problem: "is empty" });
    }
    if case.accepted_diagnoses.is_empty() {
        return Err(CorpusError::EmptyAccepted { line, case_id: case.case_id.clone() });
    }
    if case.accepted_diagnoses.iter().any(|d| d.trim().is_empty()) {
        return Err(CorpusError::InvalidField { line, field: "accepted_diagnoses", problem: "contains an empty entry" });
    }
    Ok(())
}

/// Reads and validates a corpus file. The corpus is named after the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".to_string());
    Corpus::parse(name, path.display().to_string(), &text)
}

/// The lexicon that accompanies the demo corpus.
pub fn demo_lexicon() -> SynonymTable {
    SynonymTable::parse(DEMO_LEXICON).expect("bundled demo lexicon is valid")
}

pub fn demo_lexicon_text() -> &'static str {
    DEMO_LEXICON
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconWarning {
    /// An accepted diagnosis normalizes to nothing and can never match.
    EmptyNormalization { case_id: String, diagnosis: String },
    /// Several cases accept the same normalized term. Informational.
    SharedTerm { term: String, case_ids: Vec<String> },
}

impl fmt::Display for LexiconWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LexiconWarning::EmptyNormalization { case_id, diagnosis } => {
                write!(f, "case {case_id}: accepted diagnosis {diagnosis:?} normalizes to an empty term")
            }
            LexiconWarning::SharedTerm { term, case_ids } => {
                write!(f, "info: term {term:?} is accepted by several cases: {}", case_ids.join(", "))
            }
        }
    }
}

/// Checks how the corpus ground truth interacts with a lexicon.
pub fn validate_against_lexicon(corpus: &Corpus, lexicon: &SynonymTable) -> Vec<LexiconWarning> {
    let mut warnings = Vec::new();
    let mut owners: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for case in corpus {
        for diagnosis in &case.accepted_diagnoses {
            let term = lexicon.term(diagnosis);
            if term.is_empty() {
                warnings.push(LexiconWarning::EmptyNormalization { case_id: case.case_id.clone(), diagnosis: diagnosis.clone() });
            } else {
                let ids = owners.entry(term).or_default();
                if !ids.contains(&case.case_id) {
                    ids.push(case.case_id.clone());
                }
            }
        }
    }
    for (term, case_ids) in owners {
        if case_ids.len() > 1 {
            warnings.push(LexiconWarning::SharedTerm { term, case_ids });
        }
    }
    warnings
}
