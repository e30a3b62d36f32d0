#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cidx::{run, Cli, CliError, Runtime};
use cidx_core::solvers::live::HttpCall;
use cidx_core::solvers::{HttpReply, HttpTransport, RetryPolicy, TransportFault};
use clap::Parser;
use serde_json::json;

/// Scripted transport: answers by prompt substring, or fails with a fixed fault.
pub struct FakeTransport {
    pub calls: AtomicUsize,
    pub bodies: Mutex<Vec<String>>,
    pub fault: Option<TransportFault>,
    pub answer: String,
}

impl FakeTransport {
    pub fn answering(text: &str) -> Arc<Self> {
        Arc::new(FakeTransport {
            calls: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
            fault: None,
            answer: text.to_string(),
        })
    }

    pub fn failing(fault: TransportFault) -> Arc<Self> {
        Arc::new(FakeTransport {
            calls: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
            fault: Some(fault),
            answer: String::new(),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl HttpTransport for FakeTransport {
    fn post_json(&self, call: &HttpCall) -> Result<HttpReply, TransportFault> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.bodies.lock().unwrap().push(call.body.to_string());
        if let Some(f) = &self.fault {
            return Err(f.clone());
        }
        Ok(HttpReply { status: 200, body: json!({"choices": [{"message": {"content": self.answer}}]}).to_string() })
    }
}

pub struct Outcome {
    pub result: Result<(), CliError>,
    pub stdout: String,
}

impl Outcome {
    pub fn code(&self) -> u8 {
        self.result.as_ref().map_or_else(CliError::exit_code, |_| 0)
    }
}

/// Runs the CLI in-process with a fixed environment and transport.
pub fn run_cli(args: &[&str], env: &HashMap<String, String>, transport: Arc<dyn HttpTransport>) -> Outcome {
    let cli = Cli::try_parse_from(std::iter::once("cidx").chain(args.iter().copied())).expect("arguments parse");
    let lookup = |k: &str| env.get(k).cloned();
    let mut out = Vec::new();
    let result = {
        let mut rt = Runtime { env: &lookup, transport, retry: RetryPolicy::no_delay(3), out: &mut out };
        run(&cli, &mut rt)
    };
    Outcome { result, stdout: String::from_utf8(out).unwrap() }
}

pub fn offline() -> Arc<FakeTransport> {
    FakeTransport::failing(TransportFault::Network("network disabled in tests".into()))
}

pub const SYNTHETIC_ROSTER: &str = r#"
[[solver]]
name = "syn-a"
kind = "synthetic"
hit_probability = 0.395
seed = 5

[[solver]]
name = "syn-b"
kind = "synthetic"
hit_probability = 0.66
seed = 5

[[solver]]
name = "syn-c"
kind = "synthetic"
hit_probability = 0.585
seed = 5

[[solver]]
name = "syn-d"
kind = "synthetic"
hit_probability = 0.72
seed = 5
"#;

/// A scratch directory with a roster and the standard flag set.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(roster: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("roster.toml"), roster).unwrap();
        Workspace { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn cache(&self) -> PathBuf {
        self.path("cache")
    }

    pub fn out(&self) -> PathBuf {
        self.path("out")
    }

    /// Global flags followed by `rest`.
    pub fn args(&self, rest: &[&str]) -> Vec<String> {
        let mut v: Vec<String> = vec![
            "--roster".into(),
            self.path("roster.toml").display().to_string(),
            "--cache-dir".into(),
            self.cache().display().to_string(),
            "--out-dir".into(),
            self.out().display().to_string(),
        ];
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    }

    pub fn run(&self, rest: &[&str], env: &HashMap<String, String>, transport: Arc<dyn HttpTransport>) -> Outcome {
        let args = self.args(rest);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_cli(&refs, env, transport)
    }
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every regular file below `dir`, recursively.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(files_under(&p));
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
