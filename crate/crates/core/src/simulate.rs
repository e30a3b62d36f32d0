//! Desk-scale trend experiments with synthetic solvers.
//!
//! Each seed builds a fresh synthetic corpus (one pseudo-word ground truth
//! per case plus a per-case pool of shared wrong answers), lets every
//! configured solver answer every case, and runs the same
//! group enumeration → aggregation → TOP-k accuracy → summary pipeline used
//! for real data. The report records, per seed, the mean accuracy of each
//! group size and whether it is non-decreasing in group size.
//!
//! Ground truths are 10-letter words, shared distractors 8 letters and
//! private distractors 9 letters, so the three never collide.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CaseVignette, Corpus};
use crate::evaluate::{self, enumerate_groups, evaluate_groups, mean_sem, summarize_all, DifferentialStore, EvalError, TopK};
use crate::normalize::SynonymTable;
use crate::solvers::synthetic::{case_rng, synthetic_answer, HitRankDistribution, SyntheticModelError, SyntheticSolverModel};
use crate::solvers::{Answer, SolverId, SolverKind};

const TRUTH_LEN: usize = 10;
const PRIVATE_LEN: usize = 9;
const SHARED_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {field} {problem}")]
    Invalid { field: String, problem: String },
    #[error("failed to read simulation config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed simulation config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("solver {solver}: {source}")]
    Model {
        solver: String,
        #[source]
        source: SyntheticModelError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedSolver {
    pub name: String,
    pub hit_probability: f64,
    /// Overrides the config-wide hit-rank distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_rank: Option<HitRankDistribution>,
}

impl SimulatedSolver {
    pub fn new(name: &str, hit_probability: f64) -> Self {
        SimulatedSolver { name: name.to_string(), hit_probability, hit_rank: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_cases: usize,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub k_values: Vec<TopK>,
    pub shared_pool_weight: f64,
    pub shared_pool_size: usize,
    pub private_pool_size: usize,
    pub hit_rank: HitRankDistribution,
    pub solvers: Vec<SimulatedSolver>,
}

impl Default for SimulationConfig {
    /// Four solvers with hit probabilities 0.395, 0.66, 0.585 and 0.72,
    /// 200 cases, 100 seeds.
    fn default() -> Self {
        SimulationConfig {
            n_cases: 200,
            n_seeds: 100,
            base_seed: 0,
            k_values: TopK::ALL.to_vec(),
            shared_pool_weight: 0.2,
            shared_pool_size: 8,
            private_pool_size: 60,
            hit_rank: HitRankDistribution::harmonic(),
            solvers: vec![
                SimulatedSolver::new("sim-a", 0.395),
                SimulatedSolver::new("sim-b", 0.66),
                SimulatedSolver::new("sim-c", 0.585),
                SimulatedSolver::new("sim-d", 0.72),
            ],
        }
    }
}

fn invalid(field: impl Into<String>, problem: impl Into<String>) -> SimulationError {
    SimulationError::Invalid { field: field.into(), problem: problem.into() }
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<Self, SimulationError> {
        let config: SimulationConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimulationError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SimulationError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.n_cases == 0 {
            return Err(invalid("n_cases", "must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(invalid("n_seeds", "must be at least 1"));
        }
        if self.solvers.is_empty() {
            return Err(invalid("solvers", "must not be empty"));
        }
        if self.k_values.is_empty() {
            return Err(invalid("k_values", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.shared_pool_weight) {
            return Err(invalid("shared_pool_weight", format!("must be in [0, 1], got {}", self.shared_pool_weight)));
        }
        if self.shared_pool_weight > 0.0 && self.shared_pool_size == 0 {
            return Err(invalid("shared_pool_size", "must be positive when shared_pool_weight > 0"));
        }
        if self.private_pool_size < crate::solvers::synthetic::MIN_PRIVATE_POOL {
            return Err(invalid(
                "private_pool_size",
                format!("must be at least {}", crate::solvers::synthetic::MIN_PRIVATE_POOL),
            ));
        }
        let mut names = std::collections::HashSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            SolverId::new(s.name.clone(), SolverKind::Synthetic)
                .map_err(|e| invalid(format!("solvers[{i}].name"), e.to_string()))?;
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("solvers[{i}].name"), format!("duplicates {:?}", s.name)));
            }
            if !(0.0..=1.0).contains(&s.hit_probability) {
                return Err(invalid(
                    format!("solvers[{i}].hit_probability"),
                    format!("must be in [0, 1], got {}", s.hit_probability),
                ));
            }
        }
        Ok(())
    }

    /// The same configuration without the named solver.
    pub fn without_solver(&self, name: &str) -> Self {
        let mut c = self.clone();
        c.solvers.retain(|s| s.name != name);
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub seed: u64,
    pub group_size: usize,
    pub k: TopK,
    pub mean_accuracy: f64,
    pub sem: f64,
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    pub group_size: usize,
    pub k: TopK,
    /// Mean over seeds of the per-seed mean accuracy.
    pub mean: f64,
    /// Standard error of that mean across seeds.
    pub sem: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneFraction {
    pub k: TopK,
    pub fraction: f64,
    pub monotone_seeds: usize,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub rows: Vec<TrendRow>,
    pub summary: Vec<TrendSummary>,
    pub monotone: Vec<MonotoneFraction>,
    pub hit_rank_assumption: String,
}

impl TrendReport {
    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        seeds
    }

    /// Per-seed means for one k, ordered by group size.
    pub fn means(&self, seed: u64, k: TopK) -> Vec<f64> {
        self.rows.iter().filter(|r| r.seed == seed && r.k == k).map(|r| r.mean_accuracy).collect()
    }

    pub fn monotone_fraction(&self, k: TopK) -> Option<f64> {
        self.monotone.iter().find(|m| m.k == k).map(|m| m.fraction)
    }

    pub fn summary_for(&self, group_size: usize, k: TopK) -> Option<&TrendSummary> {
        self.summary.iter().find(|s| s.group_size == group_size && s.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,group_size,k,mean_accuracy,sem,n_groups\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.seed, r.group_size, r.k, r.mean_accuracy, r.sem, r.n_groups);
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let n_seeds = self.seeds().len();
        let _ = writeln!(out, "synthetic trend simulation: {n_seeds} seed(s)");
        let _ = writeln!(out, "assumption: {}", self.hit_rank_assumption);
        let _ = writeln!(out, "group_size  k  mean_accuracy  sem_across_seeds");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:>10}  {}  {:>13}  {:>16}",
                s.group_size,
                s.k,
                evaluate::truncate_one_decimal(s.mean),
                evaluate::truncate_one_decimal(s.sem)
            );
        }
        for m in &self.monotone {
            let _ = writeln!(
                out,
                "TOP-{}: mean accuracy non-decreasing in group size for {}/{} seeds ({:.1}%)",
                m.k,
                m.monotone_seeds,
                m.n_seeds,
                100.0 * m.fraction
            );
        }
        out
    }
}

fn is_non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

/// Everything one seed's pipeline produces before reduction.
pub struct SeedRun {
    pub seed: u64,
    pub corpus: Corpus,
    pub store: DifferentialStore,
    pub solvers: Vec<SolverId>,
    pub evaluation: evaluate::Evaluation,
}

/// Builds the synthetic world for one seed and evaluates every group.
pub fn run_seed(config: &SimulationConfig, seed: u64, table: &SynonymTable) -> Result<SeedRun, SimulationError> {
    let mut world = case_rng(seed, "simulation-corpus", "");
    let mut cases = Vec::with_capacity(config.n_cases);
    let mut shared_pools = Vec::with_capacity(config.n_cases);
    for i in 0..config.n_cases {
        let truth = crate::solvers::synthetic::pseudo_term(&mut world, TRUTH_LEN);
        cases.push(CaseVignette::new(format!("sim-{i:05}"), format!("synthetic case {i}"), vec![truth]));
        shared_pools.push(distinct_terms(&mut world, config.shared_pool_size, SHARED_LEN));
    }
    let corpus = Corpus::from_cases(format!("simulation-seed-{seed}"), "generated", cases).expect("generated ids are unique");

    let mut store = DifferentialStore::new();
    let mut solvers = Vec::with_capacity(config.solvers.len());
    for spec in &config.solvers {
        let id = SolverId::new(spec.name.clone(), SolverKind::Synthetic).map_err(|e| invalid("solvers.name", e.to_string()))?;
        let mut pool_rng = case_rng(seed, &spec.name, "private-pool");
        let model = SyntheticSolverModel {
            hit_probability: spec.hit_probability,
            hit_rank: spec.hit_rank.clone().unwrap_or_else(|| config.hit_rank.clone()),
            distractor_pool: distinct_terms(&mut pool_rng, config.private_pool_size, PRIVATE_LEN),
            shared_pool_weight: config.shared_pool_weight,
            seed,
        };
        model.validate().map_err(|source| SimulationError::Model { solver: spec.name.clone(), source })?;
        for (case, shared) in corpus.iter().zip(&shared_pools) {
            let mut rng = case_rng(seed, &spec.name, &case.case_id);
            let d = synthetic_answer(&model, &id, case, shared, table, &mut rng)
                .map_err(|source| SimulationError::Model { solver: spec.name.clone(), source })?;
            store.insert(Answer::Parsed(d));
        }
        solvers.push(id);
    }

    let sizes: Vec<usize> = (1..=solvers.len()).collect();
    let groups = enumerate_groups(&solvers, &sizes);
    let evaluation = evaluate_groups(&groups, &corpus, &store, &config.k_values, table)?;
    Ok(SeedRun { seed, corpus, store, solvers, evaluation })
}

fn distinct_terms<R: Rng + ?Sized>(rng: &mut R, size: usize, len: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::with_capacity(size);
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let t = crate::solvers::synthetic::pseudo_term(rng, len);
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

/// Normalization for generated worlds: no stopwords, affixes or synonyms.
pub fn simulation_table() -> SynonymTable {
    SynonymTable::from_parts("simulation", Some(vec![]), Some(vec![]), std::iter::empty::<(&str, &str)>())
        .expect("empty table is valid")
}

/// Runs every seed (in parallel) and reduces in seed order.
pub fn run_simulation(config: &SimulationConfig) -> Result<TrendReport, SimulationError> {
    config.validate()?;
    let table = simulation_table();
    let seeds: Vec<u64> = (0..config.n_seeds as u64).map(|i| config.base_seed.wrapping_add(i)).collect();
    let per_seed: Vec<Vec<TrendRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(config, seed, &table)?;
            Ok(summarize_all(&run.evaluation.accuracies)
                .into_iter()
                .map(|s| TrendRow {
                    seed,
                    group_size: s.group_size,
                    k: s.k,
                    mean_accuracy: s.mean,
                    sem: s.sem,
                    n_groups: s.n_groups,
                })
                .collect())
        })
        .collect::<Result<_, SimulationError>>()?;
    let rows: Vec<TrendRow> = per_seed.into_iter().flatten().collect();

    let mut ks = config.k_values.clone();
    ks.sort();
    ks.dedup();
    let max_size = config.solvers.len();

    let mut summary = Vec::new();
    for size in 1..=max_size {
        for &k in &ks {
            let values: Vec<f64> = rows.iter().filter(|r| r.group_size == size && r.k == k).map(|r| r.mean_accuracy).collect();
            if let Some((mean, sem)) = mean_sem(&values) {
                summary.push(TrendSummary { group_size: size, k, mean, sem, n_seeds: values.len() });
            }
        }
    }

    let mut report = TrendReport { rows, summary, monotone: Vec::new(), hit_rank_assumption: describe_hit_rank(config) };
    for &k in &ks {
        let monotone_seeds = seeds.iter().filter(|&&s| is_non_decreasing(&report.means(s, k))).count();
        report.monotone.push(MonotoneFraction {
            k,
            fraction: monotone_seeds as f64 / seeds.len() as f64,
            monotone_seeds,
            n_seeds: seeds.len(),
        });
    }
    Ok(report)
}

fn describe_hit_rank(config: &SimulationConfig) -> String {
    let probs = config.hit_rank.probabilities().iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ");
    format!(
        "rank of a correct answer drawn from [{probs}] (ranks 1-5); shared_pool_weight {}; hits independent across solvers",
        config.shared_pool_weight
    )
}
