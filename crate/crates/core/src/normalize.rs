//! Canonicalization of diagnosis strings.
//!
//! Every diagnosis, whether it comes from a solver response or from a case's
//! ground truth, goes through the same fixed pipeline before it is compared or
//! scored:
//!
//! 1. lowercase, compatibility-decompose, drop combining marks (ASCII folding)
//! 2. replace punctuation with spaces
//! 3. split on whitespace
//! 4. drop stopword and strip-affix tokens
//! 5. re-join with single spaces
//! 6. look the whole phrase up in the synonym map (single pass)

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_STOPWORDS: [&str; 9] = ["by", "of", "with", "the", "a", "an", "in", "to", "and"];
pub const DEFAULT_STRIP_AFFIXES: [&str; 3] = ["syndrome", "disorder", "disease"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed lexicon: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("synonym key {key:?} normalizes to an empty term")]
    EmptyKey { key: String },
    #[error("synonym value for {key:?} normalizes to an empty term")]
    EmptyValue { key: String },
    #[error("synonym key {key:?} maps to both {first:?} and {second:?}")]
    Conflict { key: String, first: String, second: String },
    #[error("synonym chain: {key:?} -> {via:?} -> {target:?}")]
    Chain { key: String, via: String, target: String },
    #[error("{section} entry {entry:?} must be a single token after normalization")]
    MultiToken { section: &'static str, entry: String },
}

/// Normalization lexicon: stopwords, strip-affixes and a variant → preferred
/// synonym map. Keys and values are stored in canonical surface form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynonymTable {
    synonyms: BTreeMap<String, String>,
    stopwords: BTreeSet<String>,
    strip_affixes: BTreeSet<String>,
    version: String,
}

/// On-disk lexicon layout. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    version: Option<String>,
    stopwords: Option<Vec<String>>,
    strip_affixes: Option<Vec<String>>,
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
}

impl Default for SynonymTable {
    fn default() -> Self {
        Self {
            synonyms: BTreeMap::new(),
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            strip_affixes: DEFAULT_STRIP_AFFIXES.iter().map(|s| s.to_string()).collect(),
            version: "builtin".to_string(),
        }
    }
}

impl SynonymTable {
    /// Builds a table from raw entries, canonicalizing and validating them.
    ///
    /// `None` for a word list keeps the built-in defaults.
    pub fn from_parts<I, S>(
        version: impl Into<String>,
        stopwords: Option<Vec<String>>,
        strip_affixes: Option<Vec<String>>,
        synonyms: I,
    ) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut table = SynonymTable { version: version.into(), ..SynonymTable::default() };
        if let Some(words) = stopwords {
            table.stopwords = canonical_word_set("stopwords", &words)?;
        }
        if let Some(words) = strip_affixes {
            table.strip_affixes = canonical_word_set("strip_affixes", &words)?;
        }

        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (raw_key, raw_value) in synonyms {
            let (raw_key, raw_value) = (raw_key.as_ref(), raw_value.as_ref());
            let key = table.clean(raw_key);
            if key.is_empty() {
                return Err(LexiconError::EmptyKey { key: raw_key.to_string() });
            }
            let value = table.clean(raw_value);
            if value.is_empty() {
                return Err(LexiconError::EmptyValue { key: raw_key.to_string() });
            }
            match map.get(&key) {
                Some(existing) if *existing != value => {
                    return Err(LexiconError::Conflict { key, first: existing.clone(), second: value })
                }
                Some(_) => {}
                None => {
                    map.insert(key, value);
                }
            }
        }

        for (key, value) in &map {
            if let Some(target) = map.get(value) {
                if target != value {
                    return Err(LexiconError::Chain { key: key.clone(), via: value.clone(), target: target.clone() });
                }
            }
        }
        // self-maps are no-ops
        map.retain(|k, v| k != v);
        table.synonyms = map;
        Ok(table)
    }

    /// Parses a lexicon from its TOML text.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(text)?;
        Self::from_parts(
            file.version.unwrap_or_else(|| "unversioned".to_string()),
            file.stopwords,
            file.strip_affixes,
            file.synonyms,
        )
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn strip_affixes(&self) -> &BTreeSet<String> {
        &self.strip_affixes
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Steps 1–5 of the pipeline (everything except synonym lookup).
    pub fn clean(&self, raw: &str) -> String {
        let folded = fold(raw);
        folded
            .split_whitespace()
            .filter(|tok| !self.stopwords.contains(*tok) && !self.strip_affixes.contains(*tok))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Runs the full pipeline on `raw`.
    pub fn normalize(&self, raw: &str) -> NormalizedDiagnosis {
        let cleaned = self.clean(raw);
        let term = match self.synonyms.get(&cleaned) {
            Some(preferred) => preferred.clone(),
            None => cleaned,
        };
        NormalizedDiagnosis { term, original: raw.to_string() }
    }

    /// Shorthand for `normalize(raw).term`.
    pub fn term(&self, raw: &str) -> String {
        self.normalize(raw).term
    }
}

/// Reads and validates a lexicon file.
pub fn load_synonym_table(path: impl AsRef<Path>) -> Result<SynonymTable, LexiconError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
    SynonymTable::parse(&text)
}

/// Free-function form of [`SynonymTable::normalize`].
pub fn normalize(raw: &str, table: &SynonymTable) -> NormalizedDiagnosis {
    table.normalize(raw)
}

/// A diagnosis in canonical form, with the string it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizedDiagnosis {
    pub term: String,
    pub original: String,
}

impl NormalizedDiagnosis {
    pub fn is_empty(&self) -> bool {
        self.term.is_empty()
    }
}

// Lowercase, fold diacritics, punctuation to spaces. Lowercasing runs again
// after decomposition because compatibility forms can expand to capitals.
fn fold(raw: &str) -> String {
    raw.to_lowercase()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect()
}

fn canonical_word_set(section: &'static str, words: &[String]) -> Result<BTreeSet<String>, LexiconError> {
    let mut out = BTreeSet::new();
    for word in words {
        let folded = fold(word);
        let mut tokens = folded.split_whitespace();
        match (tokens.next(), tokens.next()) {
            (Some(tok), None) => {
                out.insert(tok.to_string());
            }
            (None, _) => {}
            _ => return Err(LexiconError::MultiToken { section, entry: word.clone() }),
        }
    }
    Ok(out)
}
