//! `cidx consult`: pool every solver's answer for one free-text case.
//!
//! Nothing about the case is written to disk: live solvers run without a
//! cache and replay solvers only read.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use cidx_core::solvers::cache::escape_case_id;
use cidx_core::solvers::roster::BackendContext;
use cidx_core::solvers::{parse_response, ProviderLimits, QueryError, ResponseCache, SolverKind, SolverRequest};
use cidx_core::{aggregate, CaseVignette, Differential, ExactScore, SyntheticDifferential};

use super::bounded_map;
use super::query::require_credentials;
use crate::{files, load_lexicon, load_roster_arg, CliError, GlobalArgs, Runtime};

pub const DISCLAIMER: &str = "NOT MEDICAL ADVICE. This is research software that pools the output of language models and \
other automated solvers. It is not a diagnostic device, has not been clinically validated, and must not be used \
to make decisions about anyone's care.";

pub fn cmd_consult(g: &GlobalArgs, case_file: &Path, case_id: Option<&str>, rt: &mut Runtime<'_>) -> Result<(), CliError> {
    let text = files::read_to_string(case_file)?;
    if text.trim().is_empty() {
        return Err(CliError::Usage(format!("{}: case file is empty", case_file.display())));
    }
    let case_id = match case_id {
        Some(id) => id.to_string(),
        None => case_file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into()),
    };
    let (table, _) = load_lexicon(g, false)?;
    let (roster, _) = load_roster_arg(g)?;
    require_credentials(&roster, rt.env)?;

    // No ground truth exists here; the placeholder label is never consulted.
    let case = CaseVignette::new(case_id.clone(), text.trim(), vec![String::from("unknown")]);
    let limits = Arc::new(ProviderLimits::new());
    let context = |cache| BackendContext {
        cache,
        corpus: None,
        table: &table,
        transport: rt.transport.clone(),
        retry: rt.retry,
        env: rt.env,
        max_in_flight: None,
        provider_limits: Some(limits.clone()),
    };
    let replay_ctx = context(Some(ResponseCache::new(&g.cache_dir)));
    let live_ctx = context(None);

    let mut errors: Vec<(String, String)> = Vec::new();
    let mut jobs = Vec::new();
    for entry in &roster.solvers {
        if entry.kind() == SolverKind::Synthetic {
            errors.push((entry.name.clone(), "synthetic solvers need a corpus with ground truth".into()));
            continue;
        }
        let ctx = if entry.kind() == SolverKind::Replay { &replay_ctx } else { &live_ctx };
        jobs.push((entry, roster.backend(entry, ctx)?));
    }

    let answers = bounded_map(&jobs, g.concurrency as usize, |(entry, backend)| {
        let request = SolverRequest::for_case(&entry.id(), &case, entry.request_params());
        backend.query(&request)
    });

    let mut differentials: Vec<Differential> = Vec::new();
    let mut transport_failed = false;
    for ((entry, _), answer) in jobs.iter().zip(answers) {
        match answer {
            Ok(raw) => match parse_response(&raw.text, &table, &entry.id(), &case_id) {
                Ok(d) => differentials.push(d),
                Err(_) => errors.push((entry.name.clone(), "response contained no usable diagnosis lines".into())),
            },
            Err(e) => {
                transport_failed |= matches!(e, QueryError::Transport { .. } | QueryError::BadPayload { .. });
                let message = match e {
                    QueryError::CacheMiss { .. } => {
                        format!("no cached response for case id {case_id:?} (expected {})", escape_case_id(&case_id) + ".txt")
                    }
                    other => other.to_string(),
                };
                errors.push((entry.name.clone(), message));
            }
        }
    }

    let mut out = String::new();
    if differentials.is_empty() {
        let failures = errors.iter().map(|(s, e)| format!("  {s}: {e}")).collect();
        rt.say(format!("{DISCLAIMER}\n"))?;
        return Err(if transport_failed {
            CliError::Transport { failures }
        } else {
            CliError::Usage(format!("every solver failed:\n{}", failures.join("\n")))
        });
    }
    let refs: Vec<&Differential> = differentials.iter().collect();
    let pooled: SyntheticDifferential = aggregate::<ExactScore>(&refs).expect("one case, distinct solvers");
    let _ =
        writeln!(out, "case {case_id}: pooled differential from {} of {} solver(s)", differentials.len(), roster.solvers.len());
    out.push_str(&render(&pooled));
    if !errors.is_empty() {
        out.push_str("solver problems:\n");
        for (solver, e) in &errors {
            let _ = writeln!(out, "  {solver}: {e}");
        }
    }
    let _ = writeln!(out, "\n{DISCLAIMER}");
    rt.say(out)
}

/// Numbered entries with exact scores and each supporter's own rank.
pub fn render(d: &SyntheticDifferential) -> String {
    let width = d.entries.iter().map(|e| e.term.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (i, e) in d.entries.iter().enumerate() {
        let score = *e.aggregate_score.numer() as f64 / *e.aggregate_score.denom() as f64;
        let supporters: Vec<String> = e.supporters.iter().map(|s| format!("{}#{}", s.solver.name(), s.rank)).collect();
        let _ = writeln!(
            out,
            "{:>2}. {:<width$}  score {:>5} ({score:.3})  {}",
            i + 1,
            e.term,
            e.aggregate_score.to_string(),
            supporters.join(" "),
        );
    }
    out
}
