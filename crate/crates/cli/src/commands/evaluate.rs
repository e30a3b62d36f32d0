//! `cidx evaluate`: score every solver group from cached responses.
//!
//! Never touches the network: every answer comes from the response cache,
//! and entries cached under another prompt or parameter set count as missing.

use std::collections::BTreeMap;
use std::path::Path;

use cidx_core::evaluate::{evaluate_groups, group_differential, summarize_all, DifferentialStore, Evaluation};
use cidx_core::solvers::{parse_response, Answer, ResponseCache, Roster};

use super::{cache_state, CacheState};
use cidx_core::{enumerate_groups, AccuracySummary, Corpus, ExactScore, SolverGroup, SolverId, SynonymTable};
use serde::Serialize;
use serde_json::json;

use crate::files::{sha256_hex, write_atomic};
use crate::manifest::OutputRecord;
use crate::{manifest_file_name, write_manifest, CliError, GlobalArgs, Inputs, Runtime};

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const MATCHES_CSV: &str = "matches.csv";
pub const FIGURE_TSV: &str = "figure.tsv";
pub const DIFFERENTIALS_JSONL: &str = "differentials.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub evaluation: Evaluation,
    pub summaries: Vec<AccuracySummary>,
    /// File names written to the output directory, manifest last.
    pub files: Vec<String>,
}

/// Reads every (solver, case) response from the cache and parses it.
pub fn load_store(
    cache: &ResponseCache,
    roster: &Roster,
    corpus: &Corpus,
    table: &SynonymTable,
) -> Result<DifferentialStore, CliError> {
    let mut store = DifferentialStore::new();
    let mut missing = Vec::new();
    for entry in &roster.solvers {
        let id = entry.id();
        let params = entry.request_params();
        for case in corpus {
            match cache_state(cache, entry.kind(), &entry.name, case, &params)? {
                CacheState::Fresh(text) => store.insert(Answer::from(parse_response(&text, table, &id, &case.case_id))),
                CacheState::Missing => missing.push((entry.name.clone(), case.case_id.clone())),
                CacheState::Stale(why) => missing.push((entry.name.clone(), format!("{} ({why})", case.case_id))),
            }
        }
    }
    if missing.is_empty() {
        Ok(store)
    } else {
        Err(CliError::Incomplete { missing })
    }
}

pub fn cmd_evaluate(g: &GlobalArgs, rt: &mut Runtime<'_>) -> Result<EvaluateOutcome, CliError> {
    let started = crate::manifest::now_rfc3339();
    let inputs = Inputs::load(g)?;
    let ks = g.ks();
    let cache = ResponseCache::new(&g.cache_dir);
    let store = load_store(&cache, &inputs.roster, &inputs.corpus, &inputs.table)?;

    let ids: Vec<SolverId> = inputs.roster.ids();
    let sizes: Vec<usize> = (1..=ids.len()).collect();
    let groups = enumerate_groups(&ids, &sizes);
    let evaluation = evaluate_groups(&groups, &inputs.corpus, &store, &ks, &inputs.table)?;
    let summaries = summarize_all(&evaluation.accuracies);

    let reports = [
        (ACCURACY_CSV, accuracy_csv(&evaluation)),
        (SUMMARY_CSV, summary_csv(&summaries)),
        (SUMMARY_JSON, summary_json(&inputs, &ids, &store, &evaluation, &summaries)),
        (MATCHES_CSV, matches_csv(&evaluation)),
        (FIGURE_TSV, figure_tsv(&evaluation, &summaries)),
        (DIFFERENTIALS_JSONL, differentials_jsonl(&groups, &inputs.corpus, &store)?),
    ];

    let mut manifest = inputs.manifest("evaluate", started, g);
    let mut files = Vec::new();
    for (name, bytes) in &reports {
        write_atomic(&g.out_dir.join(name), bytes)?;
        manifest.outputs.push(OutputRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
        files.push(name.to_string());
    }
    write_manifest(manifest, &g.out_dir, "evaluate")?;
    files.push(manifest_file_name("evaluate"));

    rt.say(render_summary(&inputs.corpus, &summaries, &g.out_dir))?;
    Ok(EvaluateOutcome { evaluation, summaries, files })
}

fn render_summary(corpus: &Corpus, summaries: &[AccuracySummary], out_dir: &Path) -> String {
    let mut s = format!("evaluated {} case(s) from {}\n", corpus.len(), corpus.name);
    s.push_str("group_size  k  n_groups  accuracy\n");
    for row in summaries {
        s.push_str(&format!("{:>10}  {}  {:>8}  {}\n", row.group_size, row.k, row.n_groups, row.display()));
    }
    s.push_str(&format!("reports written to {}\n", out_dir.display()));
    s
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

#[derive(Serialize)]
struct AccuracyRow {
    group_size: usize,
    group: String,
    k: usize,
    matched: usize,
    n_cases: usize,
    accuracy: f64,
}

/// Group size, then lexicographic group order, then k.
fn accuracy_csv(e: &Evaluation) -> Vec<u8> {
    csv_bytes(e.accuracies.iter().map(|a| AccuracyRow {
        group_size: a.size,
        group: a.group.label(),
        k: a.k.get(),
        matched: a.matched,
        n_cases: a.n_cases,
        accuracy: a.accuracy,
    }))
}

#[derive(Serialize)]
struct SummaryRow {
    group_size: usize,
    k: usize,
    n_groups: usize,
    mean: f64,
    sem: f64,
    display: String,
}

fn summary_rows(summaries: &[AccuracySummary]) -> Vec<SummaryRow> {
    summaries
        .iter()
        .map(|s| SummaryRow {
            group_size: s.group_size,
            k: s.k.get(),
            n_groups: s.n_groups,
            mean: s.mean,
            sem: s.sem,
            display: s.display(),
        })
        .collect()
}

fn summary_csv(summaries: &[AccuracySummary]) -> Vec<u8> {
    csv_bytes(summary_rows(summaries))
}

fn summary_json(
    inputs: &Inputs,
    ids: &[SolverId],
    store: &DifferentialStore,
    e: &Evaluation,
    summaries: &[AccuracySummary],
) -> Vec<u8> {
    let mut parse_failures = BTreeMap::new();
    for id in ids {
        let n = inputs.corpus.iter().filter(|c| matches!(store.get(id.name(), &c.case_id), Some(Answer::Failed(_)))).count();
        parse_failures.insert(id.name().to_string(), n);
    }
    let groups: Vec<_> = e
        .accuracies
        .iter()
        .map(|a| json!({"group": a.group.label(), "group_size": a.size, "k": a.k.get(), "matched": a.matched, "accuracy": a.accuracy}))
        .collect();
    let body = json!({
        "corpus": inputs.corpus.name,
        "n_cases": inputs.corpus.len(),
        "lexicon_version": inputs.table.version(),
        "solvers": ids.iter().map(|i| i.name()).collect::<Vec<_>>(),
        "manifest": manifest_file_name("evaluate"),
        "parse_failures": parse_failures,
        "summary": summary_rows(summaries),
        "groups": groups,
    });
    let mut s = serde_json::to_string_pretty(&body).expect("summary serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct MatchRow {
    case_id: String,
    group: String,
    k: usize,
    matched: bool,
    matched_rank: Option<u32>,
}

fn matches_csv(e: &Evaluation) -> Vec<u8> {
    csv_bytes(e.matches.iter().map(|m| MatchRow {
        case_id: m.case_id.clone(),
        group: m.group.label(),
        k: m.k.get(),
        matched: m.matched,
        matched_rank: m.matched_rank.map(|r| r.get()),
    }))
}

/// Tab-separated points (one per group) and per-size means, per k.
fn figure_tsv(e: &Evaluation, summaries: &[AccuracySummary]) -> Vec<u8> {
    let mut out = String::from("kind\tk\tgroup_size\tgroup\taccuracy\tsem\n");
    let mut ks: Vec<_> = summaries.iter().map(|s| s.k).collect();
    ks.sort();
    ks.dedup();
    for k in ks {
        for a in e.accuracies.iter().filter(|a| a.k == k) {
            out.push_str(&format!("point\t{}\t{}\t{}\t{}\t\n", k, a.size, a.group.label(), a.accuracy));
        }
        for s in summaries.iter().filter(|s| s.k == k) {
            out.push_str(&format!("mean\t{}\t{}\t\t{}\t{}\n", k, s.group_size, s.mean, s.sem));
        }
    }
    out.into_bytes()
}

/// One line per (group, case): the pooled differential with exact scores.
fn differentials_jsonl(groups: &[SolverGroup], corpus: &Corpus, store: &DifferentialStore) -> Result<Vec<u8>, CliError> {
    let mut out = String::new();
    for group in groups {
        for case in corpus {
            let d = group_differential::<ExactScore>(group, &case.case_id, store)?;
            let entries: Vec<_> = d
                .iter()
                .flat_map(|d| &d.entries)
                .map(|e| {
                    json!({
                        "term": e.term,
                        "score": e.aggregate_score.to_string(),
                        "score_f64": *e.aggregate_score.numer() as f64 / *e.aggregate_score.denom() as f64,
                        "supporters": e.supporters.iter().map(|s| json!({"solver": s.solver.name(), "rank": s.rank.get()})).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let line = json!({
                "group": group.label(),
                "case_id": case.case_id,
                "all_failed": d.is_none(),
                "entries": entries,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    Ok(out.into_bytes())
}
