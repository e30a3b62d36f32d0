//! On-disk response cache.
//!
//! Layout: `<root>/<solver>/<case>.txt` holds the raw response and
//! `<case>.meta.json` the request metadata. A transport failure that could
//! not be resolved is recorded as `<case>.failure.json` and does not count as
//! cached. Case ids are escaped so any id maps to a single safe file name.
//! Writes go through a temp file in the same directory and are renamed into
//! place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{RequestParams, SolverKind};

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct CacheError {
    path: String,
    #[source]
    source: io::Error,
}

impl CacheError {
    fn new(path: &Path, source: io::Error) -> Self {
        CacheError { path: path.display().to_string(), source }
    }
}

/// Sidecar stored next to each cached response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMetadata {
    pub solver: String,
    pub kind: SolverKind,
    pub case_id: String,
    pub prompt_sha256: String,
    pub params: RequestParams,
    pub attempts: u32,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub solver: String,
    pub case_id: String,
    pub error: String,
    pub attempts: u32,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedResponse {
    pub text: String,
    pub metadata: Option<CacheMetadata>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Escapes a case id into a file-name stem. Bytes outside `[A-Za-z0-9_-]`
/// become `%XX`, which keeps the mapping injective.
pub fn escape_case_id(case_id: &str) -> String {
    let mut out = String::with_capacity(case_id.len());
    for b in case_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn solver_dir(&self, solver: &str) -> PathBuf {
        self.root.join(solver)
    }

    pub fn response_path(&self, solver: &str, case_id: &str) -> PathBuf {
        self.solver_dir(solver).join(format!("{}.txt", escape_case_id(case_id)))
    }

    pub fn metadata_path(&self, solver: &str, case_id: &str) -> PathBuf {
        self.solver_dir(solver).join(format!("{}.meta.json", escape_case_id(case_id)))
    }

    pub fn failure_path(&self, solver: &str, case_id: &str) -> PathBuf {
        self.solver_dir(solver).join(format!("{}.failure.json", escape_case_id(case_id)))
    }

    pub fn contains(&self, solver: &str, case_id: &str) -> bool {
        self.response_path(solver, case_id).is_file()
    }

    pub fn get(&self, solver: &str, case_id: &str) -> Result<Option<CachedResponse>, CacheError> {
        let path = self.response_path(solver, case_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CacheError::new(&path, e)),
        };
        let meta_path = self.metadata_path(solver, case_id);
        let metadata = match fs::read_to_string(&meta_path) {
            Ok(m) => Some(
                serde_json::from_str(&m)
                    .map_err(|e| CacheError::new(&meta_path, io::Error::new(io::ErrorKind::InvalidData, e)))?,
            ),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(CacheError::new(&meta_path, e)),
        };
        Ok(Some(CachedResponse { text, metadata }))
    }

    /// Stores a response. Metadata lands first so a visible response always
    /// has its sidecar. Clears any failure record for the pair.
    pub fn put(&self, text: &str, metadata: &CacheMetadata) -> Result<(), CacheError> {
        let (solver, case_id) = (metadata.solver.as_str(), metadata.case_id.as_str());
        let meta = serde_json::to_string_pretty(metadata).expect("metadata serializes");
        atomic_write(&self.metadata_path(solver, case_id), meta.as_bytes())?;
        atomic_write(&self.response_path(solver, case_id), text.as_bytes())?;
        let failure = self.failure_path(solver, case_id);
        match fs::remove_file(&failure) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(CacheError::new(&failure, e)),
            _ => Ok(()),
        }
    }

    pub fn record_failure(&self, record: &FailureRecord) -> Result<(), CacheError> {
        let body = serde_json::to_string_pretty(record).expect("failure record serializes");
        atomic_write(&self.failure_path(&record.solver, &record.case_id), body.as_bytes())
    }

    pub fn failure(&self, solver: &str, case_id: &str) -> Result<Option<FailureRecord>, CacheError> {
        let path = self.failure_path(solver, case_id);
        match fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t)
                .map(Some)
                .map_err(|e| CacheError::new(&path, io::Error::new(io::ErrorKind::InvalidData, e))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CacheError::new(&path, e)),
        }
    }
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CacheError::new(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CacheError::new(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CacheError::new(path, e))?;
    tmp.persist(path).map_err(|e| CacheError::new(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(solver: &str, case_id: &str, prompt: &str) -> CacheMetadata {
        CacheMetadata {
            solver: solver.into(),
            kind: SolverKind::Live,
            case_id: case_id.into(),
            prompt_sha256: prompt_hash(prompt),
            params: RequestParams::new(),
            attempts: 2,
            timestamp: 0,
        }
    }

    #[test]
    fn put_get_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        assert!(cache.get("s1", "c1").unwrap().is_none());
        cache.put("1. Gout\n", &meta("s1", "c1", "p")).unwrap();
        let got = cache.get("s1", "c1").unwrap().unwrap();
        assert_eq!(got.text, "1. Gout\n");
        assert_eq!(got.metadata.unwrap().attempts, 2);
        assert!(cache.contains("s1", "c1"));
    }

    #[test]
    fn case_ids_escape_injectively() {
        assert_eq!(escape_case_id("demo-01"), "demo-01");
        assert_eq!(escape_case_id("a/b"), "a%2Fb");
        assert_ne!(escape_case_id("a%2Fb"), escape_case_id("a/b"));
        assert_eq!(escape_case_id(".."), "%2E%2E");
    }

    #[test]
    fn success_clears_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let rec = FailureRecord { solver: "s".into(), case_id: "c".into(), error: "timeout".into(), attempts: 3, timestamp: 0 };
        cache.record_failure(&rec).unwrap();
        assert_eq!(cache.failure("s", "c").unwrap(), Some(rec));
        assert!(!cache.contains("s", "c"));
        cache.put("x", &meta("s", "c", "p")).unwrap();
        assert!(cache.failure("s", "c").unwrap().is_none());
    }
}
