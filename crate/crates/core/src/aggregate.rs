//! Reciprocal-rank aggregation of differentials.
//!
//! Every diagnosis at rank `r` in an input differential contributes `1/r` to
//! its term's aggregate score. The synthesized differential is the five
//! highest-scoring terms, ordered by descending score, ties broken by
//! ascending term. The result depends only on the multiset of inputs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::score::{individual_score, Rank, Score};
use crate::solvers::{Differential, SolverId, MAX_DIFFERENTIAL_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no differentials to aggregate")]
    Empty,
    #[error("differentials mix case ids {0:?} and {1:?}")]
    MixedCases(String, String),
    #[error("solver {0} contributes more than one differential")]
    DuplicateSolver(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supporter {
    pub solver: SolverId,
    pub rank: Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredDiagnosis<S> {
    pub term: String,
    pub aggregate_score: S,
    /// Sorted by solver name.
    pub supporters: Vec<Supporter>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticDifferential<S> {
    pub case_id: String,
    pub group: BTreeSet<SolverId>,
    pub entries: Vec<ScoredDiagnosis<S>>,
}

impl<S> SyntheticDifferential<S> {
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Descending score, then ascending term.
pub fn ranking_order<S: Score>(a: &ScoredDiagnosis<S>, b: &ScoredDiagnosis<S>) -> Ordering {
    b.aggregate_score.score_cmp(&a.aggregate_score).then_with(|| a.term.cmp(&b.term))
}

pub(crate) fn check_inputs(differentials: &[&Differential]) -> Result<(String, BTreeSet<SolverId>), AggregateError> {
    let first = differentials.first().ok_or(AggregateError::Empty)?;
    let mut group = BTreeSet::new();
    for d in differentials {
        if d.case_id() != first.case_id() {
            return Err(AggregateError::MixedCases(first.case_id().to_string(), d.case_id().to_string()));
        }
        if !group.insert(d.solver().clone()) {
            return Err(AggregateError::DuplicateSolver(d.solver().name().to_string()));
        }
    }
    Ok((first.case_id().to_string(), group))
}

/// Pools, scores and synthesizes a top-5 differential for one case.
pub fn aggregate<S: Score>(differentials: &[&Differential]) -> Result<SyntheticDifferential<S>, AggregateError> {
    let (case_id, group) = check_inputs(differentials)?;

    let mut pooled: HashMap<&str, ScoredDiagnosis<S>> = HashMap::new();
    for differential in differentials {
        for (rank, entry) in differential.ranked() {
            let scored = pooled.entry(entry.term.as_str()).or_insert_with(|| ScoredDiagnosis {
                term: entry.term.clone(),
                aggregate_score: S::zero(),
                supporters: Vec::new(),
            });
            scored.aggregate_score += individual_score::<S>(rank);
            scored.supporters.push(Supporter { solver: differential.solver().clone(), rank });
        }
    }

    let mut entries: Vec<ScoredDiagnosis<S>> = pooled.into_values().collect();
    entries.sort_by(ranking_order);
    entries.truncate(MAX_DIFFERENTIAL_LEN);
    for e in &mut entries {
        e.supporters.sort_by(|a, b| a.solver.name().cmp(b.solver.name()));
    }
    Ok(SyntheticDifferential { case_id, group, entries })
}

/// Same contract as [`aggregate`], over owned inputs.
pub fn aggregate_owned<S: Score>(differentials: &[Differential]) -> Result<SyntheticDifferential<S>, AggregateError> {
    let refs: Vec<&Differential> = differentials.iter().collect();
    aggregate(&refs)
}

/// Wraps a single differential as a synthetic one (1/r scores, one supporter each).
pub fn from_single<S: Score>(differential: &Differential) -> SyntheticDifferential<S> {
    aggregate(&[differential]).expect("one differential always aggregates")
}
