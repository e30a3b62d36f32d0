//! `cidx query`: populate the response cache.

use std::sync::Arc;

use cidx_core::solvers::cache::{prompt_hash, unix_now, FailureRecord};
use cidx_core::solvers::roster::BackendContext;
use cidx_core::solvers::{CacheMetadata, ProviderLimits, QueryError, ResponseCache, SolverBackend, SolverKind, SolverRequest};
use cidx_core::CaseVignette;

use super::{bounded_map, cache_state, CacheState};
use crate::{write_manifest, CliError, GlobalArgs, Inputs, Runtime};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryOutcome {
    /// Responses obtained and cached by this run.
    pub fetched: usize,
    /// Pairs already in the cache.
    pub skipped: usize,
    /// `solver<TAB>case<TAB>error` for every failed request.
    pub failures: Vec<String>,
    /// Replay pairs with nothing to replay.
    pub unresolved: Vec<(String, String)>,
}

/// Fails with the variable names when any live solver lacks a credential.
pub(crate) fn require_credentials(
    roster: &cidx_core::solvers::Roster,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<(), CliError> {
    let missing = roster.missing_credentials(env);
    if missing.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> =
        missing.iter().map(|(solver, var)| format!("  set {var} (credential for solver {solver})")).collect();
    Err(CliError::Usage(format!("missing credentials:\n{}", lines.join("\n"))))
}

pub fn cmd_query(g: &GlobalArgs, rt: &mut Runtime<'_>) -> Result<QueryOutcome, CliError> {
    let started = crate::manifest::now_rfc3339();
    let inputs = Inputs::load(g)?;
    require_credentials(&inputs.roster, rt.env)?;

    let cache = ResponseCache::new(&g.cache_dir);
    let ctx = BackendContext {
        cache: Some(cache.clone()),
        corpus: Some(&inputs.corpus),
        table: &inputs.table,
        transport: rt.transport.clone(),
        retry: rt.retry,
        env: rt.env,
        max_in_flight: None,
        provider_limits: Some(Arc::new(ProviderLimits::new())),
    };
    let mut backends: Vec<Box<dyn SolverBackend>> = Vec::new();
    for entry in &inputs.roster.solvers {
        backends.push(inputs.roster.backend(entry, &ctx)?);
    }

    let mut outcome = QueryOutcome::default();
    let mut work: Vec<(usize, &CaseVignette)> = Vec::new();
    for (i, entry) in inputs.roster.solvers.iter().enumerate() {
        let params = entry.request_params();
        for case in &inputs.corpus {
            match cache_state(&cache, entry.kind(), &entry.name, case, &params)? {
                CacheState::Fresh(_) => outcome.skipped += 1,
                _ if entry.kind() == SolverKind::Replay => outcome.unresolved.push((entry.name.clone(), case.case_id.clone())),
                _ => work.push((i, case)),
            }
        }
    }

    let results = bounded_map(&work, g.concurrency as usize, |&(i, case)| {
        let entry = &inputs.roster.solvers[i];
        let request = SolverRequest::for_case(&entry.id(), case, entry.request_params());
        let result = backends[i].query(&request).and_then(|raw| {
            // Live backends write through on their own.
            if entry.kind() != SolverKind::Live {
                let meta = CacheMetadata {
                    solver: entry.name.clone(),
                    kind: entry.kind(),
                    case_id: case.case_id.clone(),
                    prompt_sha256: prompt_hash(&request.prompt),
                    params: request.params.clone(),
                    attempts: raw.attempts,
                    timestamp: unix_now(),
                };
                cache.put(&raw.text, &meta)?;
            }
            Ok(())
        });
        if let Err(e) = &result {
            let attempts = match e {
                QueryError::Transport { attempts, .. } => *attempts,
                _ => 1,
            };
            let _ = cache.record_failure(&FailureRecord {
                solver: entry.name.clone(),
                case_id: case.case_id.clone(),
                error: e.to_string(),
                attempts,
                timestamp: unix_now(),
            });
        }
        result
    });

    for (&(i, case), result) in work.iter().zip(results) {
        match result {
            Ok(()) => outcome.fetched += 1,
            Err(e) => outcome.failures.push(format!("  {}\t{}\t{e}", inputs.roster.solvers[i].name, case.case_id)),
        }
    }

    let mut manifest = inputs.manifest("query", started, g);
    manifest.settings.insert("fetched".into(), outcome.fetched.into());
    manifest.settings.insert("skipped".into(), outcome.skipped.into());
    manifest.settings.insert("failed".into(), outcome.failures.len().into());
    write_manifest(manifest, &g.out_dir, "query")?;

    rt.say(format!(
        "query: {} fetched, {} already cached, {} failed, {} unresolved replay pair(s)\n",
        outcome.fetched,
        outcome.skipped,
        outcome.failures.len(),
        outcome.unresolved.len()
    ))?;
    if !outcome.failures.is_empty() {
        return Err(CliError::Transport { failures: outcome.failures });
    }
    if !outcome.unresolved.is_empty() {
        return Err(CliError::Incomplete { missing: outcome.unresolved });
    }
    Ok(outcome)
}
