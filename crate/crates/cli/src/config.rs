//! Experiment configuration file. Every field is optional; command-line
//! flags override whatever the file sets.
//!
//! ```json
//! {
//!   "seed": 13,
//!   "lang": "en",
//!   "cost": "grf",
//!   "max_hops": 3,
//!   "undirected": true,
//!   "hop_limit": "post-filter",
//!   "tie_break": "deterministic",
//!   "max_ngram": 3,
//!   "stopwords": "stopwords.txt",
//!   "embeddings": "complex-300.txt",
//!   "model": { "mode": "relations", "labels": ["entailment", "neutral"], "embedding_dim": 300 },
//!   "train": { "learning_rate": 0.001, "batch_size": 64, "max_epochs": 150, "patience": 20 }
//! }
//! ```
//!
//! `train.seed` is ignored; the top-level seed drives every random stream.

use std::path::{Path, PathBuf};

use anyhow::Context;
use kgctx_core::concepts::ExtractionConfig;
use kgctx_core::grn::{ModelConfig, TrainConfig};
use kgctx_core::paths::SearchOptions;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub lang: String,
    pub cost: String,
    pub max_hops: usize,
    pub undirected: bool,
    pub hop_limit: String,
    pub tie_break: String,
    pub max_ngram: usize,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let search = SearchOptions::default();
        PipelineConfig {
            seed: 0,
            lang: "en".into(),
            cost: "grf".into(),
            max_hops: search.max_hops,
            undirected: search.undirected,
            hop_limit: search.hop_limit.to_string(),
            tie_break: "deterministic".into(),
            max_ngram: ExtractionConfig::default().max_ngram,
            stopwords: None,
            embeddings: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a config file, or the defaults when `path` is `None`. Relative
    /// file references inside the config resolve against its directory.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.stopwords, &mut cfg.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn search_options(&self) -> anyhow::Result<SearchOptions> {
        Ok(SearchOptions {
            max_hops: self.max_hops,
            undirected: self.undirected,
            hop_limit: self.hop_limit.parse().map_err(|e| UsageError(format!("{e}")))?,
            tie_break: self.tie_break.parse().map_err(|e| UsageError(format!("{e}")))?,
        })
    }

    pub fn extraction(&self) -> anyhow::Result<ExtractionConfig> {
        if self.max_ngram == 0 {
            return Err(UsageError("max_ngram must be positive".into()).into());
        }
        let mut cfg = ExtractionConfig {
            max_ngram: self.max_ngram,
            ..ExtractionConfig::default()
        };
        if let Some(path) = &self.stopwords {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read stopword file {}", path.display()))?;
            cfg = cfg.with_stopword_text(&text);
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "model": {"embedding_dim": 8}, "stopwords": "sw.txt"}"#).unwrap();
        let cfg = PipelineConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.model.embedding_dim, 8);
        assert_eq!(cfg.model.ffn_hidden, 200);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.stopwords.as_deref(), Some(dir.path().join("sw.txt").as_path()));
        assert_eq!(cfg.train_config().seed, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"max_hop": 5}"#).unwrap();
        let err = PipelineConfig::load(Some(&path)).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
