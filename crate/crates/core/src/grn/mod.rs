//! Path-sequence classifier: token embeddings, a token-level bidirectional
//! GRU per path, a pair-level bidirectional GRU over the path vectors, and a
//! two-layer feed-forward head trained with softmax cross-entropy.

mod checkpoint;
mod embeddings;
pub mod gru;
mod model;
mod train;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::paths::PathRecord;
use crate::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use embeddings::{load_embeddings, EmbeddingCoverage};
pub use model::{EncodedBundle, Gradients, GrnModel, GrnWeights, HeadWeights, ModelConfig};
pub use train::{evaluate, train, train_with, Adam, EpochRecord, Evaluation, TrainConfig};
pub use vocab::{TokenVocab, NO_PATH, NO_PATH_TOKEN, UNK, UNK_TOKEN};

/// Which path elements become GRU input tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathTokenMode {
    #[default]
    Relations,
    Entities,
    Both,
}

impl PathTokenMode {
    pub const ALL: [PathTokenMode; 3] = [Self::Relations, Self::Entities, Self::Both];
}

impl FromStr for PathTokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "relations" | "relation" | "rel" => Ok(Self::Relations),
            "entities" | "entity" | "concepts" => Ok(Self::Entities),
            "both" => Ok(Self::Both),
            _ => Err(Error::UnknownTokenMode(s.to_string())),
        }
    }
}

impl fmt::Display for PathTokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Relations => "relations",
            Self::Entities => "entities",
            Self::Both => "both",
        })
    }
}

/// Token labels of a path in reading order. `Both` interleaves nodes and
/// relations, starting and ending with a node.
pub fn tokenize_path(path: &PathRecord, mode: PathTokenMode) -> Vec<&str> {
    match mode {
        PathTokenMode::Relations => path.rels.iter().map(|r| r.rel.as_str()).collect(),
        PathTokenMode::Entities => path.nodes.iter().map(String::as_str).collect(),
        PathTokenMode::Both => {
            let mut out = Vec::with_capacity(path.nodes.len() + path.rels.len());
            for (i, node) in path.nodes.iter().enumerate() {
                out.push(node.as_str());
                if let Some(r) = path.rels.get(i) {
                    out.push(r.rel.as_str());
                }
            }
            out
        }
    }
}
