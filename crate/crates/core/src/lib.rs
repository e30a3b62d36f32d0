//! Collective-intelligence aggregation of ranked differential diagnoses.
//!
//! Several solvers (LLMs reached over HTTP, replayed caches, or seeded
//! synthetic models) each return up to five ranked diagnoses for a clinical
//! case. Diagnoses are normalized, scored by summed reciprocal rank across
//! solvers, and the top five form the group's differential. Groups of every
//! size are then scored by TOP-k accuracy against the case ground truth.
//!
//! Score arithmetic is generic over [`score::Score`]; the crate defaults to
//! exact rationals ([`ExactScore`]) with `f64` as the floating alternative.

pub mod aggregate;
pub mod corpus;
pub mod evaluate;
pub mod normalize;
pub mod score;
pub mod simulate;
pub mod solvers;

/// Exact aggregate score. Denominators never exceed 60.
pub type ExactScore = num_rational::Ratio<i64>;
/// Floating-point aggregate score, compared with a 1e-9 epsilon.
pub type FloatScore = f64;

pub type ScoredDiagnosis = aggregate::ScoredDiagnosis<ExactScore>;
pub type SyntheticDifferential = aggregate::SyntheticDifferential<ExactScore>;
pub type AccuracySummary = evaluate::AccuracySummary<f64>;

pub use aggregate::{aggregate, AggregateError};
pub use corpus::{load_corpus, CaseVignette, Corpus};
pub use evaluate::{enumerate_groups, group_accuracy, summarize, top_k_match, GroupAccuracy, MatchResult, SolverGroup, TopK};
pub use normalize::{load_synonym_table, normalize, NormalizedDiagnosis, SynonymTable};
pub use score::{individual_score, Rank, Score};
pub use simulate::{run_simulation, SimulationConfig, TrendReport};
pub use solvers::{build_prompt, parse_response, Differential, SolverId, SolverKind};
