//! Seeded stochastic solvers.
//!
//! A synthetic solver places one accepted diagnosis in its differential with
//! probability `hit_probability`, at a rank drawn from a hit-rank
//! distribution, and fills the remaining slots with distinct distractors.
//! Each distractor comes from the case's shared pool (wrong answers other
//! solvers may also give) with probability `shared_pool_weight`, otherwise
//! from the solver's private pool (hallucinations nobody else repeats).

use std::collections::{BTreeMap, HashSet};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    render_numbered, Differential, QueryError, RawResponse, SolverBackend, SolverId, SolverRequest, MAX_DIFFERENTIAL_LEN,
};
use crate::corpus::{CaseVignette, Corpus};
use crate::normalize::SynonymTable;

/// Minimum number of distinct terms in a private distractor pool.
pub const MIN_PRIVATE_POOL: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticModelError {
    #[error("hit_probability must be in [0, 1], got {0}")]
    HitProbability(f64),
    #[error("shared_pool_weight must be in [0, 1], got {0}")]
    SharedPoolWeight(f64),
    #[error("hit_rank_weights must be 5 finite non-negative numbers with a positive sum")]
    RankWeights,
    #[error("distractor_pool needs at least {MIN_PRIVATE_POOL} distinct terms, got {0}")]
    PoolTooSmall(usize),
    #[error("distractor pools exhausted for case {0}")]
    PoolExhausted(String),
}

/// Distribution over ranks 1..=5 for the accepted diagnosis on a hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RankSpec", into = "RankSpec")]
pub struct HitRankDistribution {
    probabilities: [f64; MAX_DIFFERENTIAL_LEN],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RankSpec {
    Named(String),
    Weights(Vec<f64>),
}

impl TryFrom<RankSpec> for HitRankDistribution {
    type Error = String;

    fn try_from(spec: RankSpec) -> Result<Self, Self::Error> {
        match spec {
            RankSpec::Named(name) => match name.as_str() {
                "uniform" => Ok(HitRankDistribution::uniform()),
                "harmonic" => Ok(HitRankDistribution::harmonic()),
                other => {
                    Err(format!("unknown hit-rank distribution {other:?} (expected \"uniform\", \"harmonic\" or 5 weights)"))
                }
            },
            RankSpec::Weights(w) => HitRankDistribution::from_weights(&w).map_err(|e| e.to_string()),
        }
    }
}

impl From<HitRankDistribution> for RankSpec {
    fn from(d: HitRankDistribution) -> Self {
        RankSpec::Weights(d.probabilities.to_vec())
    }
}

impl HitRankDistribution {
    pub fn uniform() -> Self {
        HitRankDistribution { probabilities: [0.2; MAX_DIFFERENTIAL_LEN] }
    }

    /// Weights proportional to 1/r: hits concentrate near the top.
    pub fn harmonic() -> Self {
        Self::from_weights(&[1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0]).expect("valid weights")
    }

    /// All mass on one rank (1-based).
    pub fn point(rank: usize) -> Self {
        assert!((1..=MAX_DIFFERENTIAL_LEN).contains(&rank), "rank out of range");
        let mut probabilities = [0.0; MAX_DIFFERENTIAL_LEN];
        probabilities[rank - 1] = 1.0;
        HitRankDistribution { probabilities }
    }

    /// Normalizes arbitrary non-negative weights to probabilities.
    pub fn from_weights(weights: &[f64]) -> Result<Self, SyntheticModelError> {
        if weights.len() != MAX_DIFFERENTIAL_LEN || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SyntheticModelError::RankWeights);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SyntheticModelError::RankWeights);
        }
        let mut probabilities = [0.0; MAX_DIFFERENTIAL_LEN];
        for (p, w) in probabilities.iter_mut().zip(weights) {
            *p = w / total;
        }
        Ok(HitRankDistribution { probabilities })
    }

    pub fn probabilities(&self) -> &[f64; MAX_DIFFERENTIAL_LEN] {
        &self.probabilities
    }

    /// Draws a 0-based slot index.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        WeightedIndex::new(self.probabilities).expect("validated weights").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSolverModel {
    pub hit_probability: f64,
    pub hit_rank: HitRankDistribution,
    /// The solver's private distractors.
    pub distractor_pool: Vec<String>,
    pub shared_pool_weight: f64,
    pub seed: u64,
}

impl SyntheticSolverModel {
    pub fn validate(&self) -> Result<(), SyntheticModelError> {
        if !(0.0..=1.0).contains(&self.hit_probability) {
            return Err(SyntheticModelError::HitProbability(self.hit_probability));
        }
        if !(0.0..=1.0).contains(&self.shared_pool_weight) {
            return Err(SyntheticModelError::SharedPoolWeight(self.shared_pool_weight));
        }
        let distinct: HashSet<&str> = self.distractor_pool.iter().map(String::as_str).collect();
        if distinct.len() < MIN_PRIVATE_POOL {
            return Err(SyntheticModelError::PoolTooSmall(distinct.len()));
        }
        Ok(())
    }
}

/// Derives a solver's per-case RNG from `(seed, solver name, case id)`.
pub fn case_rng(seed: u64, solver: &str, case_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((solver.len() as u64).to_le_bytes());
    hasher.update(solver.as_bytes());
    hasher.update(case_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// A lowercase letters-only pseudo-word; never collides with stopwords in
/// practice and is already in canonical form.
pub fn pseudo_term<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

/// `size` distinct pseudo-terms.
pub fn generated_pool<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(size);
    let mut pool = Vec::with_capacity(size);
    while pool.len() < size {
        let term = pseudo_term(rng, 9);
        if seen.insert(term.clone()) {
            pool.push(term);
        }
    }
    pool
}

/// Produces one differential. The RNG is the only source of randomness.
pub fn synthetic_answer<R: Rng + ?Sized>(
    model: &SyntheticSolverModel,
    solver: &SolverId,
    case: &CaseVignette,
    shared_pool: &[String],
    table: &SynonymTable,
    rng: &mut R,
) -> Result<Differential, SyntheticModelError> {
    let accepted_terms: HashSet<String> = case.accepted_terms(table).into_iter().collect();
    let accepted_raw: Vec<&String> = case.accepted_diagnoses.iter().filter(|d| !table.term(d).is_empty()).collect();

    let mut slots: [Option<String>; MAX_DIFFERENTIAL_LEN] = Default::default();
    let mut used: HashSet<String> = HashSet::new();
    if !accepted_raw.is_empty() && rng.random_bool(model.hit_probability) {
        let slot = model.hit_rank.sample(rng);
        let pick = accepted_raw[rng.random_range(0..accepted_raw.len())];
        slots[slot] = Some(pick.clone());
    }
    // The whole accepted set is off-limits for distractors.
    used.extend(accepted_terms.iter().cloned());

    for slot in slots.iter_mut().filter(|s| s.is_none()) {
        let from_shared = rng.random_bool(model.shared_pool_weight);
        let mut choice = None;
        if from_shared {
            choice = draw(shared_pool, &used, table, rng);
        }
        if choice.is_none() {
            choice = draw(&model.distractor_pool, &used, table, rng);
        }
        let (raw, term) = choice.ok_or_else(|| SyntheticModelError::PoolExhausted(case.case_id.clone()))?;
        used.insert(term);
        *slot = Some(raw);
    }

    let names: Vec<String> = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
    let raw_response = render_numbered(names.iter().map(String::as_str));
    let entries = names.iter().map(|n| table.normalize(n));
    Differential::from_entries(solver.clone(), case.case_id.clone(), entries, raw_response)
        .ok_or_else(|| SyntheticModelError::PoolExhausted(case.case_id.clone()))
}

/// Random draws tried before falling back to a full scan of the pool.
const DRAW_ATTEMPTS: usize = 32;

/// A uniformly chosen pool entry whose term is non-empty and not yet used.
fn draw<R: Rng + ?Sized>(pool: &[String], used: &HashSet<String>, table: &SynonymTable, rng: &mut R) -> Option<(String, String)> {
    if pool.is_empty() {
        return None;
    }
    for _ in 0..DRAW_ATTEMPTS {
        let raw = &pool[rng.random_range(0..pool.len())];
        let term = table.term(raw);
        if !term.is_empty() && !used.contains(&term) {
            return Some((raw.clone(), term));
        }
    }
    let mut candidates: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    for raw in pool {
        let term = table.term(raw);
        if !term.is_empty() && !used.contains(&term) && seen.insert(term.clone()) {
            candidates.push((raw.clone(), term));
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let idx = rng.random_range(0..candidates.len());
    Some(candidates.swap_remove(idx))
}

/// Plausible wrong answers shared by every synthetic solver on corpus cases.
const COMMON_MIMICS: &[&str] = &[
    "Viral syndrome",
    "Sepsis",
    "Anxiety disorder",
    "Migraine",
    "Gastroenteritis",
    "Pulmonary embolism",
    "Pericarditis",
    "Costochondritis",
    "Gastroesophageal reflux disease",
    "Panic disorder",
    "Bronchitis",
    "Urinary tract infection",
    "Pyelonephritis",
    "Appendicitis",
    "Diverticulitis",
    "Cellulitis",
    "Septic arthritis",
    "Reactive arthritis",
    "Rheumatoid arthritis",
    "Osteoarthritis",
    "Lyme disease",
    "Multiple sclerosis",
    "Myasthenia gravis",
    "Transient ischemic attack",
    "Ischemic stroke",
    "Vasculitis",
    "Systemic lupus erythematosus",
    "Hypothyroidism",
    "Hyperthyroidism",
    "Adrenal insufficiency",
    "Hypoglycemia",
    "Dehydration",
    "Iron deficiency anemia",
    "Peptic ulcer disease",
    "Biliary colic",
    "Hepatitis",
    "Nephrolithiasis",
    "Ovarian torsion",
    "Pelvic inflammatory disease",
    "Tension headache",
    "Meningitis",
    "Encephalitis",
    "Streptococcal pharyngitis",
    "Sinusitis",
    "Asthma exacerbation",
    "Heart failure",
    "Aortic dissection",
    "Unstable angina",
    "Atrial fibrillation",
    "Medication side effect",
];

/// Case-specific shared distractors, identical for every solver.
pub fn shared_pool_for_case(case_id: &str, size: usize) -> Vec<String> {
    let mut rng = case_rng(0, "shared-pool", case_id);
    let mut pool: Vec<String> = COMMON_MIMICS.iter().map(|s| s.to_string()).collect();
    rand::seq::SliceRandom::shuffle(pool.as_mut_slice(), &mut rng);
    pool.truncate(size);
    pool
}

/// Synthetic solver answering cases of a known corpus.
pub struct SyntheticBackend {
    solver: SolverId,
    model: SyntheticSolverModel,
    cases: BTreeMap<String, CaseVignette>,
    table: SynonymTable,
    shared_pool_size: usize,
}

impl SyntheticBackend {
    pub fn new(
        solver: SolverId,
        model: SyntheticSolverModel,
        corpus: &Corpus,
        table: SynonymTable,
    ) -> Result<Self, SyntheticModelError> {
        model.validate()?;
        Ok(SyntheticBackend {
            solver,
            model,
            cases: corpus.iter().map(|c| (c.case_id.clone(), c.clone())).collect(),
            table,
            shared_pool_size: 8,
        })
    }

    pub fn with_shared_pool_size(mut self, size: usize) -> Self {
        self.shared_pool_size = size;
        self
    }

    /// Deterministic in `(seed, case_id, solver name)`.
    pub fn answer(&self, case: &CaseVignette) -> Result<Differential, SyntheticModelError> {
        let mut rng = case_rng(self.model.seed, self.solver.name(), &case.case_id);
        let shared = shared_pool_for_case(&case.case_id, self.shared_pool_size);
        synthetic_answer(&self.model, &self.solver, case, &shared, &self.table, &mut rng)
    }
}

impl SolverBackend for SyntheticBackend {
    fn solver(&self) -> &SolverId {
        &self.solver
    }

    fn query(&self, request: &SolverRequest) -> Result<RawResponse, QueryError> {
        let case = self.cases.get(&request.case_id).ok_or_else(|| QueryError::UnknownCase {
            solver: self.solver.name().to_string(),
            case_id: request.case_id.clone(),
        })?;
        let differential = self
            .answer(case)
            .map_err(|e| QueryError::Synthetic { solver: self.solver.name().to_string(), message: e.to_string() })?;
        Ok(RawResponse { text: differential.raw_response().to_string(), attempts: 1 })
    }
}
