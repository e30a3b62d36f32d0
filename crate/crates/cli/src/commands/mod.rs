pub mod consult;
pub mod evaluate;
pub mod query;
pub mod simulate;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `job` over `items` on at most `workers` threads and returns results
/// in item order.
pub(crate) fn bounded_map<T: Sync, R: Send>(items: &[T], workers: usize, job: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = job(item);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every item processed")).collect()
}

use cidx_core::solvers::cache::prompt_hash;
use cidx_core::solvers::{build_prompt, RequestParams, ResponseCache, SolverKind};
use cidx_core::CaseVignette;

use crate::CliError;

/// What the cache holds for one (solver, case) pair.
pub(crate) enum CacheState {
    Fresh(String),
    Missing,
    /// Cached under a different prompt or request parameters.
    Stale(&'static str),
}

/// Replay entries are trusted on prompt alone; their parameters are
/// whatever the original run used.
pub(crate) fn cache_state(
    cache: &ResponseCache,
    kind: SolverKind,
    solver: &str,
    case: &CaseVignette,
    params: &RequestParams,
) -> Result<CacheState, CliError> {
    let cached = cache.get(solver, &case.case_id).map_err(|e| CliError::Usage(e.to_string()))?;
    let Some(cached) = cached else {
        return Ok(CacheState::Missing);
    };
    if let Some(meta) = &cached.metadata {
        if meta.prompt_sha256 != prompt_hash(&build_prompt(case)) {
            return Ok(CacheState::Stale("cached for a different prompt"));
        }
        if kind != SolverKind::Replay && &meta.params != params {
            return Ok(CacheState::Stale("cached with different request parameters"));
        }
    }
    Ok(CacheState::Fresh(cached.text))
}
