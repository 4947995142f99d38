//! Benchmark configuration file (JSON).
//!
//! ```json
//! {
//!   "time_limit": 5.0,
//!   "agents": [10, 20],
//!   "seeds": [0, 1],
//!   "solvers": [
//!     { "name": "lagat", "policy": "weights.bin" },
//!     { "name": "pibt-lacam", "no_policy": true, "deadlock_depth": 0 }
//!   ]
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lagat::{load_weights, PolicyWeights, SolverOptions};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("policy {path}: {reason}")]
    Policy { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    /// Agent counts to run per scenario; all scenario entries when absent.
    #[serde(default)]
    pub agents: Option<Vec<usize>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverRow>,
}

fn default_time_limit() -> f64 {
    10.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverRow {
    pub name: String,
    /// Weight file, relative to the config file's directory.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(default = "default_depth")]
    pub deadlock_depth: usize,
    #[serde(default)]
    pub anytime: bool,
    #[serde(default)]
    pub no_policy: bool,
    #[serde(default)]
    pub no_deadlock_detection: bool,
    #[serde(default = "default_lns_k")]
    pub lns_k: usize,
    #[serde(default)]
    pub max_expansions: Option<u64>,
    #[serde(default)]
    pub max_lns_iterations: Option<u64>,
}

fn default_depth() -> usize {
    SolverOptions::default().deadlock_depth
}

fn default_lns_k() -> usize {
    SolverOptions::default().lns_k
}

/// A solver row with its weights loaded.
#[derive(Clone, Debug)]
pub struct ResolvedSolver {
    pub name: String,
    pub options: SolverOptions,
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        if cfg.time_limit.is_nan() || cfg.time_limit <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "time_limit must be positive, got {}",
                cfg.time_limit
            )));
        }
        if cfg.solvers.is_empty() {
            return Err(ConfigError::Invalid("no solvers listed".into()));
        }
        if cfg.seeds.is_empty() {
            return Err(ConfigError::Invalid("no seeds listed".into()));
        }
        let mut names: Vec<&str> = cfg.solvers.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid(format!("duplicate solver name {:?}", w[0])));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Loads every referenced weight file once; paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Vec<ResolvedSolver>, ConfigError> {
        self.solvers
            .iter()
            .map(|row| {
                let policy = match (&row.policy, row.no_policy) {
                    (Some(p), false) => Some(read_policy(&base.join(p))?),
                    _ => None,
                };
                Ok(ResolvedSolver {
                    name: row.name.clone(),
                    options: SolverOptions {
                        time_limit: self.time_limit,
                        deadlock_depth: row.deadlock_depth,
                        policy,
                        anytime: row.anytime,
                        disable_policy: row.no_policy,
                        disable_deadlock_detection: row.no_deadlock_detection,
                        lns_k: row.lns_k,
                        max_expansions: row.max_expansions,
                        max_lns_iterations: row.max_lns_iterations,
                        ..SolverOptions::default()
                    },
                })
            })
            .collect()
    }
}

pub fn read_policy(path: &Path) -> Result<Arc<PolicyWeights>, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_weights(&bytes).map(Arc::new).map_err(|e| ConfigError::Policy {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}
