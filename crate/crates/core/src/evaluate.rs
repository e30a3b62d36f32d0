//! TOP-k accuracy over solver groups.
//!
//! A case counts as correctly diagnosed by a solver group when one of the
//! first `k` entries of the group's differential equals a normalized accepted
//! diagnosis. Single solvers are scored on their own differential, larger
//! groups on the aggregate of their members' differentials. Accuracy is the
//! percentage of all corpus cases, so unanswered cases count as misses.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use itertools::Itertools;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{aggregate, AggregateError, SyntheticDifferential};
use crate::corpus::{CaseVignette, Corpus};
use crate::normalize::SynonymTable;
use crate::score::{Rank, Score};
use crate::solvers::{Answer, Differential, SolverId};
use crate::ExactScore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no differential or parse-failure marker for solver {solver}, case {case_id}")]
    Missing { solver: String, case_id: String },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("cannot summarize an empty accuracy list")]
    EmptySummary,
    #[error("accuracy for group {group} has size {size}/k={k}, expected size {expected_size}/k={expected_k}")]
    MixedSummary { group: String, size: usize, k: TopK, expected_size: usize, expected_k: TopK },
    #[error("k must be 1, 3 or 5, got {0}")]
    InvalidK(u32),
}

/// Matching depth. Only TOP-1, TOP-3 and TOP-5 are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum TopK {
    One,
    Three,
    Five,
}

impl TopK {
    pub const ALL: [TopK; 3] = [TopK::One, TopK::Three, TopK::Five];

    pub fn get(self) -> usize {
        match self {
            TopK::One => 1,
            TopK::Three => 3,
            TopK::Five => 5,
        }
    }
}

impl TryFrom<u32> for TopK {
    type Error = EvalError;

    fn try_from(k: u32) -> Result<Self, Self::Error> {
        match k {
            1 => Ok(TopK::One),
            3 => Ok(TopK::Three),
            5 => Ok(TopK::Five),
            other => Err(EvalError::InvalidK(other)),
        }
    }
}

impl From<TopK> for u32 {
    fn from(k: TopK) -> u32 {
        k.get() as u32
    }
}

impl fmt::Display for TopK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// A set of solvers, kept sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SolverGroup(Vec<SolverId>);

impl SolverGroup {
    pub fn new(members: impl IntoIterator<Item = SolverId>) -> Self {
        let mut members: Vec<SolverId> = members.into_iter().collect();
        members.sort_by(|a, b| a.name().cmp(b.name()));
        members.dedup_by(|a, b| a.name() == b.name());
        SolverGroup(members)
    }

    pub fn members(&self) -> &[SolverId] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|s| s.name() == name)
    }

    /// Members joined with `+`.
    pub fn label(&self) -> String {
        self.0.iter().map(SolverId::name).join("+")
    }
}

impl fmt::Display for SolverGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Anything with ranked terms that can be scored against ground truth.
pub trait RankedTerms {
    fn case_id(&self) -> &str;
    fn group(&self) -> SolverGroup;
    fn ranked_terms(&self) -> Vec<&str>;
}

impl RankedTerms for Differential {
    fn case_id(&self) -> &str {
        Differential::case_id(self)
    }

    fn group(&self) -> SolverGroup {
        SolverGroup::new([self.solver().clone()])
    }

    fn ranked_terms(&self) -> Vec<&str> {
        self.terms().collect()
    }
}

impl<S> RankedTerms for SyntheticDifferential<S> {
    fn case_id(&self) -> &str {
        &self.case_id
    }

    fn group(&self) -> SolverGroup {
        SolverGroup::new(self.group.iter().cloned())
    }

    fn ranked_terms(&self) -> Vec<&str> {
        self.terms().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    pub case_id: String,
    pub group: SolverGroup,
    pub k: TopK,
    pub matched: bool,
    pub matched_rank: Option<Rank>,
}

/// Rank of the first accepted term among `terms`, if any.
fn first_hit(terms: &[&str], accepted: &HashSet<String>) -> Option<Rank> {
    terms.iter().position(|t| accepted.contains(*t)).map(Rank::from_index)
}

fn match_at(case_id: &str, group: &SolverGroup, k: TopK, hit: Option<Rank>) -> MatchResult {
    let matched_rank = hit.filter(|r| r.get() as usize <= k.get());
    MatchResult { case_id: case_id.to_string(), group: group.clone(), k, matched: matched_rank.is_some(), matched_rank }
}

/// TOP-k match of one differential against a case's accepted diagnoses.
pub fn top_k_match(differential: &impl RankedTerms, case: &CaseVignette, k: TopK, table: &SynonymTable) -> MatchResult {
    let accepted: HashSet<String> = case.accepted_terms(table).into_iter().collect();
    let hit = first_hit(&differential.ranked_terms(), &accepted);
    let mut result = match_at(&case.case_id, &differential.group(), k, hit);
    result.case_id = differential.case_id().to_string();
    result
}

/// All subsets of each requested size, sizes ascending, members and groups
/// in lexicographic name order. Sizes larger than the roster yield nothing.
pub fn enumerate_groups(roster: &[SolverId], sizes: &[usize]) -> Vec<SolverGroup> {
    let mut sorted: Vec<SolverId> = roster.to_vec();
    sorted.sort_by(|a, b| a.name().cmp(b.name()));
    let sizes: Vec<usize> = sizes.iter().copied().sorted().dedup().collect();
    sizes
        .into_iter()
        .filter(|&s| s >= 1 && s <= sorted.len())
        .flat_map(|size| sorted.iter().cloned().combinations(size).map(SolverGroup::new).collect::<Vec<_>>())
        .collect()
}

/// Parsed answers keyed by `(solver name, case id)`.
#[derive(Debug, Clone, Default)]
pub struct DifferentialStore {
    answers: BTreeMap<(String, String), Answer>,
}

impl DifferentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, answer: Answer) {
        let key = match &answer {
            Answer::Parsed(d) => (d.solver().name().to_string(), d.case_id().to_string()),
            Answer::Failed(f) => (f.solver.name().to_string(), f.case_id.clone()),
        };
        self.answers.insert(key, answer);
    }

    pub fn get(&self, solver: &str, case_id: &str) -> Option<&Answer> {
        self.answers.get(&(solver.to_string(), case_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// `(solver, case)` pairs with no answer at all.
    pub fn missing(&self, solvers: &[SolverId], corpus: &Corpus) -> Vec<(String, String)> {
        let mut missing = Vec::new();
        for solver in solvers {
            for case in corpus {
                if self.get(solver.name(), &case.case_id).is_none() {
                    missing.push((solver.name().to_string(), case.case_id.clone()));
                }
            }
        }
        missing
    }
}

/// The group's differential for one case, or `None` when no member produced
/// a usable answer.
pub fn group_differential<S: Score>(
    group: &SolverGroup,
    case_id: &str,
    store: &DifferentialStore,
) -> Result<Option<SyntheticDifferential<S>>, EvalError> {
    let mut parsed = Vec::with_capacity(group.size());
    for solver in group.members() {
        match store.get(solver.name(), case_id) {
            Some(Answer::Parsed(d)) => parsed.push(d),
            Some(Answer::Failed(_)) => {}
            None => return Err(EvalError::Missing { solver: solver.name().to_string(), case_id: case_id.to_string() }),
        }
    }
    if parsed.is_empty() {
        return Ok(None);
    }
    Ok(Some(aggregate(&parsed)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub group: SolverGroup,
    pub size: usize,
    pub k: TopK,
    pub matched: usize,
    pub n_cases: usize,
    /// Percentage in [0, 100].
    pub accuracy: f64,
}

impl GroupAccuracy {
    pub fn from_counts(group: SolverGroup, k: TopK, matched: usize, n_cases: usize) -> Self {
        let accuracy = if n_cases == 0 { 0.0 } else { 100.0 * matched as f64 / n_cases as f64 };
        GroupAccuracy { size: group.size(), group, k, matched, n_cases, accuracy }
    }
}

/// Per-case match results of one group for every requested k, ordered by
/// case (corpus order) then k.
pub fn group_matches(
    group: &SolverGroup,
    corpus: &Corpus,
    store: &DifferentialStore,
    ks: &[TopK],
    table: &SynonymTable,
) -> Result<Vec<MatchResult>, EvalError> {
    let mut results = Vec::with_capacity(corpus.len() * ks.len());
    for case in corpus {
        let synthesized = group_differential::<ExactScore>(group, &case.case_id, store)?;
        let hit = match &synthesized {
            Some(d) => {
                let accepted: HashSet<String> = case.accepted_terms(table).into_iter().collect();
                first_hit(&d.ranked_terms(), &accepted)
            }
            None => None,
        };
        for &k in ks {
            results.push(match_at(&case.case_id, group, k, hit));
        }
    }
    Ok(results)
}

/// Accuracy of one group at one k over the whole corpus.
pub fn group_accuracy(
    group: &SolverGroup,
    corpus: &Corpus,
    store: &DifferentialStore,
    k: TopK,
    table: &SynonymTable,
) -> Result<GroupAccuracy, EvalError> {
    let matches = group_matches(group, corpus, store, &[k], table)?;
    let matched = matches.iter().filter(|m| m.matched).count();
    Ok(GroupAccuracy::from_counts(group.clone(), k, matched, corpus.len()))
}

/// Accuracies (group order, then k) and the full match matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracies: Vec<GroupAccuracy>,
    pub matches: Vec<MatchResult>,
}

impl Evaluation {
    pub fn accuracies_for(&self, size: usize, k: TopK) -> Vec<GroupAccuracy> {
        self.accuracies.iter().filter(|a| a.size == size && a.k == k).cloned().collect()
    }
}

/// Evaluates every group at every k. Groups run in parallel; output order is
/// the input group order.
pub fn evaluate_groups(
    groups: &[SolverGroup],
    corpus: &Corpus,
    store: &DifferentialStore,
    ks: &[TopK],
    table: &SynonymTable,
) -> Result<Evaluation, EvalError> {
    let ks: Vec<TopK> = ks.iter().copied().sorted().dedup().collect();
    let per_group: Vec<Vec<MatchResult>> =
        groups.par_iter().map(|g| group_matches(g, corpus, store, &ks, table)).collect::<Result<_, _>>()?;

    let mut accuracies = Vec::with_capacity(groups.len() * ks.len());
    for (group, matches) in groups.iter().zip(&per_group) {
        for &k in &ks {
            let matched = matches.iter().filter(|m| m.k == k && m.matched).count();
            accuracies.push(GroupAccuracy::from_counts(group.clone(), k, matched, corpus.len()));
        }
    }
    Ok(Evaluation { accuracies, matches: per_group.into_iter().flatten().collect() })
}

/// Mean and standard error of the mean (population variance, `σ/√n`).
pub fn mean_sem<F: Float>(values: &[F]) -> Option<(F, F)> {
    if values.is_empty() {
        return None;
    }
    let n = F::from(values.len())?;
    let mean = values.iter().fold(F::zero(), |acc, &v| acc + v) / n;
    let var = values.iter().fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
    Some((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracySummary<F> {
    pub group_size: usize,
    pub k: TopK,
    pub mean: F,
    pub sem: F,
    pub n_groups: usize,
}

impl<F: Float> AccuracySummary<F> {
    /// `"mean ± sem"`, each truncated to one decimal.
    pub fn display(&self) -> String {
        format!("{} ± {}", truncate_one_decimal(self.mean), truncate_one_decimal(self.sem))
    }
}

/// Truncates toward zero at one decimal place. A 1e-9 guard keeps values like
/// 58.99999999 (binary noise on 59.0) from printing as 58.9.
pub fn truncate_one_decimal<F: Float>(x: F) -> String {
    let x = x.to_f64().unwrap_or(f64::NAN);
    if !x.is_finite() {
        return format!("{x}");
    }
    let scaled = x * 10.0;
    let t = (scaled + scaled.signum() * 1e-9).trunc() / 10.0;
    format!("{:.1}", if t == 0.0 { 0.0 } else { t })
}

/// Summary statistics over raw accuracy values, generic over the float type.
pub fn summarize_values<F: Float>(values: &[F], group_size: usize, k: TopK) -> Result<AccuracySummary<F>, EvalError> {
    let (mean, sem) = mean_sem(values).ok_or(EvalError::EmptySummary)?;
    Ok(AccuracySummary { group_size, k, mean, sem, n_groups: values.len() })
}

/// Mean ± SEM across all groups of one size at one k.
pub fn summarize(accuracies: &[GroupAccuracy], group_size: usize, k: TopK) -> Result<AccuracySummary<f64>, EvalError> {
    if let Some(bad) = accuracies.iter().find(|a| a.size != group_size || a.k != k) {
        return Err(EvalError::MixedSummary {
            group: bad.group.label(),
            size: bad.size,
            k: bad.k,
            expected_size: group_size,
            expected_k: k,
        });
    }
    let values: Vec<f64> = accuracies.iter().map(|a| a.accuracy).collect();
    summarize_values(&values, group_size, k)
}

/// One summary per (size, k) present in `accuracies`, size-major.
pub fn summarize_all(accuracies: &[GroupAccuracy]) -> Vec<AccuracySummary<f64>> {
    let keys: Vec<(usize, TopK)> = accuracies.iter().map(|a| (a.size, a.k)).sorted().dedup().collect();
    keys.into_iter()
        .map(|(size, k)| {
            let subset: Vec<GroupAccuracy> = accuracies.iter().filter(|a| a.size == size && a.k == k).cloned().collect();
            summarize(&subset, size, k).expect("non-empty homogeneous subset")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{ParseFailure, SolverKind};

    fn sid(n: &str) -> SolverId {
        SolverId::new(n, SolverKind::Synthetic).unwrap()
    }

    fn diff(solver: &str, case: &str, terms: &[&str]) -> Differential {
        let t = SynonymTable::default();
        Differential::from_entries(sid(solver), case, terms.iter().map(|s| t.normalize(s)), "").unwrap()
    }

    #[test]
    fn top_k_basic() {
        let t = SynonymTable::default();
        let case = CaseVignette::new("c", "text", vec!["Truth".into()]);
        let d = diff("s", "c", &["x", "truth", "y"]);
        let m3 = top_k_match(&d, &case, TopK::Three, &t);
        assert!(m3.matched);
        assert_eq!(m3.matched_rank, Rank::new(2));
        let m1 = top_k_match(&d, &case, TopK::One, &t);
        assert!(!m1.matched);
        assert_eq!(m1.matched_rank, None);
    }

    #[test]
    fn top_k_through_synonyms() {
        let t = SynonymTable::from_parts("t", None, None, [("flu", "influenza")]).unwrap();
        let case = CaseVignette::new("c", "text", vec!["Influenza".into()]);
        let d = Differential::from_entries(sid("s"), "c", ["Flu", "Cold"].iter().map(|s| t.normalize(s)), "").unwrap();
        let m = top_k_match(&d, &case, TopK::One, &t);
        assert!(m.matched);
        assert_eq!(m.matched_rank, Rank::new(1));
    }

    #[test]
    fn k_values() {
        assert_eq!(TopK::try_from(3).unwrap(), TopK::Three);
        assert_eq!(TopK::try_from(2), Err(EvalError::InvalidK(2)));
    }

    #[test]
    fn groups_for_four_solvers() {
        let roster: Vec<_> = ["d", "b", "a", "c"].iter().map(|n| sid(n)).collect();
        let counts: Vec<usize> = (1..=4).map(|s| enumerate_groups(&roster, &[s]).len()).collect();
        assert_eq!(counts, [4, 6, 4, 1]);
        let pairs: Vec<String> = enumerate_groups(&roster, &[2]).iter().map(SolverGroup::label).collect();
        assert_eq!(pairs, ["a+b", "a+c", "a+d", "b+c", "b+d", "c+d"]);
        assert!(enumerate_groups(&roster, &[5]).is_empty());
        assert_eq!(enumerate_groups(&roster, &[3, 1]).first().unwrap().label(), "a");
    }

    #[test]
    fn accuracy_arithmetic() {
        let g = SolverGroup::new([sid("a")]);
        assert_eq!(GroupAccuracy::from_counts(g.clone(), TopK::Five, 118, 200).accuracy, 59.0);
        assert_eq!(GroupAccuracy::from_counts(g, TopK::Five, 200, 200).accuracy, 100.0);
    }

    #[test]
    fn failures_count_as_misses_and_missing_is_an_error() {
        let t = SynonymTable::default();
        let corpus = Corpus::from_cases(
            "t",
            "",
            vec![CaseVignette::new("c1", "x", vec!["gout".into()]), CaseVignette::new("c2", "x", vec!["gout".into()])],
        )
        .unwrap();
        let mut store = DifferentialStore::new();
        store.insert(Answer::Parsed(diff("a", "c1", &["gout"])));
        store.insert(Answer::Failed(ParseFailure { solver: sid("a"), case_id: "c2".into(), raw_response: "??".into() }));
        store.insert(Answer::Parsed(diff("b", "c1", &["lupus"])));
        let ga = group_accuracy(&SolverGroup::new([sid("a")]), &corpus, &store, TopK::Five, &t).unwrap();
        assert_eq!((ga.matched, ga.n_cases, ga.accuracy), (1, 2, 50.0));

        let err = group_accuracy(&SolverGroup::new([sid("a"), sid("b")]), &corpus, &store, TopK::Five, &t).unwrap_err();
        assert_eq!(err, EvalError::Missing { solver: "b".into(), case_id: "c2".into() });
        assert_eq!(store.missing(&[sid("a"), sid("b")], &corpus), vec![("b".to_string(), "c2".to_string())]);
    }

    #[test]
    fn summary_of_table_singles() {
        let s = summarize_values(&[39.5, 66.0, 58.5, 72.0], 1, TopK::Five).unwrap();
        assert!((s.mean - 59.0).abs() < 1e-12);
        assert!((s.sem - 6.116).abs() < 1e-3);
        assert_eq!(s.display(), "59.0 ± 6.1");
        let single = summarize_values(&[78.0f32], 4, TopK::Five).unwrap();
        assert_eq!(single.sem, 0.0);
        assert_eq!(single.display(), "78.0 ± 0.0");
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_one_decimal(69.0833), "69.0");
        assert_eq!(truncate_one_decimal(75.375), "75.3");
        assert_eq!(truncate_one_decimal(58.999999999999), "59.0");
        assert_eq!(truncate_one_decimal(0.0), "0.0");
    }

    #[test]
    fn summarize_rejects_mixed_and_empty() {
        let a = GroupAccuracy::from_counts(SolverGroup::new([sid("a")]), TopK::Five, 1, 2);
        assert_eq!(summarize(&[], 1, TopK::Five), Err(EvalError::EmptySummary));
        assert!(matches!(summarize(&[a], 2, TopK::Five), Err(EvalError::MixedSummary { .. })));
    }
}
