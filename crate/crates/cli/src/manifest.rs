//! Run manifests: what went into a run and what came out.
//!
//! Report bodies never contain timestamps, so reruns are byte-identical;
//! the manifest carries the wall-clock times and the content hashes that tie
//! reports back to their inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cidx_core::solvers::RequestParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::files::{self, sha256_file};
use crate::CliError;

/// Prefix of input paths that refer to data compiled into the binary.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub name: String,
    pub kind: String,
    pub params: RequestParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<InputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roster: Option<InputRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solvers: Vec<SolverRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<InputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<InputRecord>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub k: Vec<u32>,
    #[serde(default)]
    pub settings: BTreeMap<String, Value>,
    #[serde(default)]
    pub outputs: Vec<OutputRecord>,
}

/// A hash that no longer matches, or a file that is gone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub path: String,
    pub problem: String,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn new(command: &str, started_at: String) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            started_at,
            finished_at: String::new(),
            corpus: None,
            roster: None,
            solvers: Vec::new(),
            lexicon: None,
            lexicon_version: None,
            config: None,
            seeds: Vec::new(),
            k: Vec::new(),
            settings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = files::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Stamps the finish time and writes the manifest as pretty JSON.
    pub fn write(mut self, path: &Path) -> Result<PathBuf, CliError> {
        self.finished_at = now_rfc3339();
        let mut body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        body.push('\n');
        files::write_atomic(path, body.as_bytes())?;
        Ok(path.to_path_buf())
    }

    /// Recomputes every recorded hash. Builtin inputs are skipped.
    pub fn verify(&self, manifest_dir: &Path) -> Vec<Mismatch> {
        let mut problems = Vec::new();
        let inputs = [&self.corpus, &self.roster, &self.lexicon, &self.config];
        for record in inputs.into_iter().flatten() {
            if !record.path.starts_with(BUILTIN_PREFIX) {
                check(Path::new(&record.path), &record.path, &record.sha256, &mut problems);
            }
        }
        for out in &self.outputs {
            check(&manifest_dir.join(&out.path), &out.path, &out.sha256, &mut problems);
        }
        problems
    }
}

fn check(path: &Path, label: &str, want: &str, problems: &mut Vec<Mismatch>) {
    match sha256_file(path) {
        Ok(got) if got == want => {}
        Ok(got) => {
            problems.push(Mismatch { path: label.to_string(), problem: format!("sha256 {got} does not match recorded {want}") })
        }
        Err(e) => problems.push(Mismatch { path: label.to_string(), problem: e.to_string() }),
    }
}
