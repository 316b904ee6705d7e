//! Flat `key=value` configuration with embedded defaults.
//!
//! One key per line; `#` starts a comment. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::path::Path;

use crate::vector_index::Metric;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub embedder_dim: usize,
    pub index_metric: Metric,
    pub retrieval_alpha: f64,
    pub retrieval_gamma: f64,
    pub retrieval_depth: usize,
    pub retrieval_threshold: f64,
    pub retrieval_token_budget: usize,
    pub retrieval_workers: usize,
    pub impact_gamma: f64,
    pub impact_depth: usize,
    pub validation_perf_budget_ms: u64,
    pub validation_max_artifact_bytes: usize,
    /// Sources trusted outright during conflict resolution.
    pub conflict_authoritative_sources: Vec<String>,
    pub paths_corpus: String,
    pub paths_index: String,
    pub paths_graph: String,
    pub paths_trace: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            embedder_dim: 384,
            index_metric: Metric::Cosine,
            retrieval_alpha: 0.6,
            retrieval_gamma: 0.5,
            retrieval_depth: 2,
            retrieval_threshold: 0.82,
            retrieval_token_budget: 2000,
            retrieval_workers: 8,
            impact_gamma: 0.7,
            impact_depth: 4,
            validation_perf_budget_ms: 5000,
            validation_max_artifact_bytes: 262_144,
            conflict_authoritative_sources: Vec::new(),
            paths_corpus: "corpus.jsonl".to_string(),
            paths_index: "index.json".to_string(),
            paths_graph: "graph.json".to_string(),
            paths_trace: "trace.json".to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Invalid {
                line: idx + 1,
                reason: "expected key=value".to_string(),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::UnknownKey(k) => ConfigError::UnknownKey(k),
                other => ConfigError::Invalid {
                    line: idx + 1,
                    reason: other.to_string(),
                },
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::Invalid {
            line: 0,
            reason: format!("key `{key}`: {reason}"),
        };
        match key {
            "embedder.dim" => {
                self.embedder_dim = value.parse().map_err(|_| bad("not an integer"))?
            }
            "index.metric" => {
                self.index_metric = Metric::parse(value).ok_or_else(|| bad("unknown metric"))?
            }
            "retrieval.alpha" => {
                self.retrieval_alpha = value.parse().map_err(|_| bad("not a number"))?
            }
            "retrieval.gamma" => {
                self.retrieval_gamma = value.parse().map_err(|_| bad("not a number"))?
            }
            "retrieval.depth" => {
                self.retrieval_depth = value.parse().map_err(|_| bad("not an integer"))?
            }
            "retrieval.threshold" => {
                self.retrieval_threshold = value.parse().map_err(|_| bad("not a number"))?
            }
            "retrieval.token_budget" => {
                self.retrieval_token_budget = value.parse().map_err(|_| bad("not an integer"))?
            }
            "retrieval.workers" => {
                let w: usize = value.parse().map_err(|_| bad("not an integer"))?;
                if !(1..=8).contains(&w) {
                    return Err(bad("workers must be in 1..=8"));
                }
                self.retrieval_workers = w;
            }
            "impact.gamma" => self.impact_gamma = value.parse().map_err(|_| bad("not a number"))?,
            "impact.depth" => {
                self.impact_depth = value.parse().map_err(|_| bad("not an integer"))?
            }
            "validation.perf_budget_ms" => {
                self.validation_perf_budget_ms = value.parse().map_err(|_| bad("not an integer"))?
            }
            "validation.max_artifact_bytes" => {
                self.validation_max_artifact_bytes =
                    value.parse().map_err(|_| bad("not an integer"))?
            }
            "conflict.authoritative_sources" => {
                self.conflict_authoritative_sources = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "paths.corpus" => self.paths_corpus = value.to_string(),
            "paths.index" => self.paths_index = value.to_string(),
            "paths.graph" => self.paths_graph = value.to_string(),
            "paths.trace" => self.paths_trace = value.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}
