//! Naive reference implementation of aggregation, used only to check
//! [`cidx_core::aggregate`] in tests.
//!
//! Scores are kept as integer multiples of 1/60 (every reciprocal rank up to
//! 5 divides 60), terms are looked up by linear scan, and the ranking is a
//! selection sort. Nothing here is shared with the production path.

use std::collections::BTreeSet;

use cidx_core::aggregate::{AggregateError, ScoredDiagnosis, Supporter, SyntheticDifferential};
use cidx_core::score::Rank;
use cidx_core::solvers::Differential;
use cidx_core::ExactScore;

const LCM: i64 = 60;

struct Row {
    term: String,
    sixtieths: i64,
    supporters: Vec<Supporter>,
}

pub fn aggregate_oracle(differentials: &[&Differential]) -> Result<SyntheticDifferential<ExactScore>, AggregateError> {
    if differentials.is_empty() {
        return Err(AggregateError::Empty);
    }
    let case_id = differentials[0].case_id().to_string();
    for i in 0..differentials.len() {
        if differentials[i].case_id() != case_id {
            return Err(AggregateError::MixedCases(case_id, differentials[i].case_id().to_string()));
        }
        for j in 0..i {
            if differentials[j].solver() == differentials[i].solver() {
                return Err(AggregateError::DuplicateSolver(differentials[i].solver().name().to_string()));
            }
        }
    }

    let mut table: Vec<Row> = Vec::new();
    for d in differentials {
        let entries = d.entries();
        for (position, entry) in entries.iter().enumerate() {
            let rank = position as i64 + 1;
            let term = &entry.term;
            let mut found = None;
            for (idx, row) in table.iter().enumerate() {
                if &row.term == term {
                    found = Some(idx);
                }
            }
            let idx = match found {
                Some(idx) => idx,
                None => {
                    table.push(Row { term: term.clone(), sixtieths: 0, supporters: Vec::new() });
                    table.len() - 1
                }
            };
            table[idx].sixtieths += LCM / rank;
            table[idx].supporters.push(Supporter { solver: d.solver().clone(), rank: Rank::new(rank as u32).unwrap() });
        }
    }

    // Selection sort: highest score first, smaller term first on ties.
    for i in 0..table.len() {
        let mut best = i;
        for j in i + 1..table.len() {
            let better = table[j].sixtieths > table[best].sixtieths
                || (table[j].sixtieths == table[best].sixtieths && table[j].term < table[best].term);
            if better {
                best = j;
            }
        }
        table.swap(i, best);
    }

    let mut entries = Vec::new();
    for mut row in table.into_iter().take(5) {
        row.supporters.sort_by(|a, b| a.solver.name().cmp(b.solver.name()));
        entries.push(ScoredDiagnosis {
            term: row.term,
            aggregate_score: ExactScore::new(row.sixtieths, LCM),
            supporters: row.supporters,
        });
    }
    let group: BTreeSet<_> = differentials.iter().map(|d| d.solver().clone()).collect();
    Ok(SyntheticDifferential { case_id, group, entries })
}
