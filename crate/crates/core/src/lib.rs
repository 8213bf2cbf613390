//! Knowledge graph contextualization for textual entailment.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`kg`] ingests a ConceptNet-style assertion dump into an immutable
//!    CSR multigraph with a surface-form index.
//! 2. [`cost`] attaches one non-negative traversal cost per edge under the
//!    default-cost, relation-frequency or global-relation-frequency heuristic.
//! 3. [`concepts`] maps premise and hypothesis to ordered concept sets and
//!    pairs them up; [`paths`] finds one minimum-cost path per pair and
//!    groups them into per-instance bundles.
//! 4. [`grn`] classifies a bundle with a token-level and a pair-level
//!    bidirectional GRU followed by a feed-forward head.

pub mod concepts;
pub mod cost;
mod error;
pub mod grn;
pub mod kg;
pub mod paths;
pub mod seed;

pub use error::{Error, Result};

/// Lowercase hex SHA-256, used to bind artifacts to their inputs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    kg::hex(&Sha256::digest(bytes))
}
