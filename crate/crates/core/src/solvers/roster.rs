//! Roster files: which solvers take part in a run and how to reach them.
//!
//! ```toml
//! [[solver]]
//! name = "gpt-4"
//! kind = "live"
//! provider = "openai-chat"
//! model = "gpt-4"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [[solver]]
//! name = "syn-a"
//! kind = "synthetic"
//! hit_probability = 0.72
//! seed = 7
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::live::{HttpTransport, LiveBackend, Provider, ProviderLimits, RetryPolicy};
use super::synthetic::{generated_pool, HitRankDistribution, SyntheticBackend, SyntheticModelError, SyntheticSolverModel};
use super::{
    default_request_params, ReplayBackend, RequestParams, ResponseCache, SolverBackend, SolverId, SolverIdError, SolverKind,
};
use crate::corpus::Corpus;
use crate::normalize::SynonymTable;

#[derive(Debug, Error)]
pub enum RosterError {
    #[error("failed to read roster {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed roster: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("roster is empty")]
    Empty,
    #[error(transparent)]
    Name(#[from] SolverIdError),
    #[error("duplicate solver name {0:?}")]
    Duplicate(String),
    #[error("solver {solver}: {source}")]
    Model {
        solver: String,
        #[source]
        source: SyntheticModelError,
    },
    #[error("solver {solver}: environment variable {var} is not set")]
    MissingCredential { solver: String, var: String },
    #[error("solver {0}: a corpus is required for synthetic solvers")]
    NoCorpus(String),
}

fn default_max_in_flight() -> usize {
    4
}

fn default_shared_weight() -> f64 {
    0.2
}

fn default_private_pool() -> usize {
    60
}

fn default_shared_pool() -> usize {
    8
}

fn default_hit_rank() -> HitRankDistribution {
    HitRankDistribution::harmonic()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverConfig {
    Live {
        provider: Provider,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default)]
        params: RequestParams,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
    Replay {},
    Synthetic {
        hit_probability: f64,
        #[serde(default = "default_hit_rank")]
        hit_rank: HitRankDistribution,
        #[serde(default = "default_shared_weight")]
        shared_pool_weight: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_private_pool")]
        private_pool_size: usize,
        #[serde(default = "default_shared_pool")]
        shared_pool_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: String,
    #[serde(flatten)]
    pub config: SolverConfig,
}

impl RosterEntry {
    pub fn kind(&self) -> SolverKind {
        match self.config {
            SolverConfig::Live { .. } => SolverKind::Live,
            SolverConfig::Replay {} => SolverKind::Replay,
            SolverConfig::Synthetic { .. } => SolverKind::Synthetic,
        }
    }

    pub fn id(&self) -> SolverId {
        SolverId::new(self.name.clone(), self.kind()).expect("validated at load")
    }

    /// Default request params overlaid with the entry's own.
    pub fn request_params(&self) -> RequestParams {
        let mut params = default_request_params();
        match &self.config {
            SolverConfig::Live { params: own, .. } => params.extend(own.iter().map(|(k, v)| (k.clone(), v.clone()))),
            // Recorded with each cached answer so a changed model or seed
            // is detectable as stale.
            SolverConfig::Synthetic { .. } => {
                params.insert("synthetic".into(), serde_json::to_value(&self.config).expect("config serializes"));
            }
            SolverConfig::Replay {} => {}
        }
        params
    }

    /// Environment variable holding the credential, for live solvers.
    pub fn credential_var(&self) -> Option<String> {
        match &self.config {
            SolverConfig::Live { api_key_env, .. } => Some(api_key_env.clone().unwrap_or_else(|| {
                let stem: String =
                    self.name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect();
                format!("CIDX_{stem}_API_KEY")
            })),
            _ => None,
        }
    }

    pub fn synthetic_model(&self) -> Option<SyntheticSolverModel> {
        match &self.config {
            SolverConfig::Synthetic { hit_probability, hit_rank, shared_pool_weight, seed, private_pool_size, .. } => {
                let mut rng = super::synthetic::case_rng(*seed, &self.name, "private-pool");
                let mut rng = ChaCha8Rng::seed_from_u64(rand::Rng::random(&mut rng));
                Some(SyntheticSolverModel {
                    hit_probability: *hit_probability,
                    hit_rank: hit_rank.clone(),
                    distractor_pool: generated_pool(&mut rng, *private_pool_size),
                    shared_pool_weight: *shared_pool_weight,
                    seed: *seed,
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    #[serde(rename = "solver", default)]
    pub solvers: Vec<RosterEntry>,
}

/// Everything a backend may need besides its roster entry.
pub struct BackendContext<'a> {
    pub cache: Option<ResponseCache>,
    pub corpus: Option<&'a Corpus>,
    pub table: &'a SynonymTable,
    pub transport: Arc<dyn HttpTransport>,
    pub retry: RetryPolicy,
    pub env: &'a dyn Fn(&str) -> Option<String>,
    /// Overrides each live entry's `max_in_flight` when set.
    pub max_in_flight: Option<usize>,
    /// When set, live entries of the same provider share one budget.
    pub provider_limits: Option<Arc<ProviderLimits>>,
}

impl Roster {
    pub fn parse(text: &str) -> Result<Self, RosterError> {
        let roster: Roster = toml::from_str(text)?;
        roster.validate()?;
        Ok(roster)
    }

    pub fn from_entries(solvers: Vec<RosterEntry>) -> Result<Self, RosterError> {
        let roster = Roster { solvers };
        roster.validate()?;
        Ok(roster)
    }

    pub fn validate(&self) -> Result<(), RosterError> {
        if self.solvers.is_empty() {
            return Err(RosterError::Empty);
        }
        let mut names = HashSet::new();
        for entry in &self.solvers {
            SolverId::new(entry.name.clone(), entry.kind())?;
            if !names.insert(entry.name.as_str()) {
                return Err(RosterError::Duplicate(entry.name.clone()));
            }
            if let Some(model) = entry.synthetic_model() {
                model.validate().map_err(|source| RosterError::Model { solver: entry.name.clone(), source })?;
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<SolverId> {
        self.solvers.iter().map(RosterEntry::id).collect()
    }

    pub fn get(&self, name: &str) -> Option<&RosterEntry> {
        self.solvers.iter().find(|e| e.name == name)
    }

    /// Live entries whose credential variable is unset, as `(solver, var)`.
    pub fn missing_credentials(&self, env: &dyn Fn(&str) -> Option<String>) -> Vec<(String, String)> {
        self.solvers
            .iter()
            .filter_map(|e| e.credential_var().map(|var| (e.name.clone(), var)))
            .filter(|(_, var)| env(var).is_none_or(|v| v.is_empty()))
            .collect()
    }

    pub fn backend(&self, entry: &RosterEntry, ctx: &BackendContext<'_>) -> Result<Box<dyn SolverBackend>, RosterError> {
        let id = entry.id();
        match &entry.config {
            SolverConfig::Live { provider, model, endpoint, max_in_flight, .. } => {
                let var = entry.credential_var().expect("live entry");
                let key = (ctx.env)(&var)
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| RosterError::MissingCredential { solver: entry.name.clone(), var })?;
                let limit = ctx.max_in_flight.unwrap_or(*max_in_flight);
                let mut backend = LiveBackend::new(id, *provider, endpoint.clone(), model.clone(), key, ctx.transport.clone())
                    .with_retry(ctx.retry);
                backend = match &ctx.provider_limits {
                    Some(shared) => backend.with_limit(shared.get(*provider, limit)),
                    None => backend.with_max_in_flight(limit),
                };
                if let Some(cache) = &ctx.cache {
                    backend = backend.with_cache(cache.clone());
                }
                Ok(Box::new(backend))
            }
            SolverConfig::Replay {} => {
                let cache = ctx.cache.clone().unwrap_or_else(|| ResponseCache::new("cache"));
                Ok(Box::new(ReplayBackend::new(id, cache)))
            }
            SolverConfig::Synthetic { shared_pool_size, .. } => {
                let corpus = ctx.corpus.ok_or_else(|| RosterError::NoCorpus(entry.name.clone()))?;
                let model = entry.synthetic_model().expect("synthetic entry");
                let backend = SyntheticBackend::new(id, model, corpus, ctx.table.clone())
                    .map_err(|source| RosterError::Model { solver: entry.name.clone(), source })?
                    .with_shared_pool_size(*shared_pool_size);
                Ok(Box::new(backend))
            }
        }
    }
}

pub fn load_roster(path: impl AsRef<Path>) -> Result<Roster, RosterError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RosterError::Io { path: path.display().to_string(), source })?;
    Roster::parse(&text)
}
