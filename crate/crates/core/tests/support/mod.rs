#![allow(dead_code)]

pub mod oracle;

use cidx_core::evaluate::DifferentialStore;
use cidx_core::solvers::synthetic::{case_rng, generated_pool};
use cidx_core::solvers::{Answer, HitRankDistribution, SyntheticBackend, SyntheticSolverModel};
use cidx_core::{Corpus, SolverId, SolverKind, SynonymTable};

/// Answers every case of `corpus` with one synthetic solver per `(name, p)`.
pub fn synthetic_store(
    corpus: &Corpus,
    table: &SynonymTable,
    solvers: &[(&str, f64)],
    seed: u64,
) -> (Vec<SolverId>, DifferentialStore) {
    let mut store = DifferentialStore::new();
    let mut ids = Vec::new();
    for &(name, p) in solvers {
        let id = SolverId::new(name, SolverKind::Synthetic).unwrap();
        let model = SyntheticSolverModel {
            hit_probability: p,
            hit_rank: HitRankDistribution::harmonic(),
            distractor_pool: generated_pool(&mut case_rng(seed, name, "pool"), 60),
            shared_pool_weight: 0.2,
            seed,
        };
        let backend = SyntheticBackend::new(id.clone(), model, corpus, table.clone()).unwrap();
        for case in corpus {
            store.insert(Answer::Parsed(backend.answer(case).unwrap()));
        }
        ids.push(id);
    }
    (ids, store)
}
