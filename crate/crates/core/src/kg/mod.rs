//! Immutable ConceptNet-style knowledge graph: ingestion, CSR storage,
//! binary snapshots and multi-edge statistics.

mod graph;
mod ingest;
mod snapshot;
mod stats;

pub use graph::{normalize_surface, ConceptId, GraphBuilder, KnowledgeGraph, LabeledEdge, RelationId};
pub(crate) use graph::hex;
pub use ingest::{ingest_conceptnet, open_assertions, IngestReport};
pub(crate) use snapshot::{read_u32, read_u64, HashingWriter};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub use stats::{multi_edge_relation_stats, MultiEdgeStats, RelationCooccurrence};
