use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid node id {0}")]
    InvalidNode(u32),

    #[error("unknown cost function `{0}` (expected dc, rf or grf)")]
    UnknownCostKind(String),

    #[error("unknown path token mode `{0}` (expected relations, entities or both)")]
    UnknownTokenMode(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("artifact hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("invalid edge cost {cost} on edge {edge} ({src} -[{rel}]-> {dst}): {reason}")]
    InvalidCost {
        edge: usize,
        src: String,
        rel: String,
        dst: String,
        cost: f64,
        reason: &'static str,
    },

    #[error("path endpoints are identical (node {0})")]
    IdenticalEndpoints(u32),

    #[error("label `{label}` is not in the configured label set {allowed:?}")]
    UnknownLabel { label: String, allowed: Vec<String> },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training set is empty")]
    EmptyTrainingSet,
}
